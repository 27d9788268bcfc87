#include "esde/featurize.hpp"

#include "esde/io.hpp"
#include "esde/order_params.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace esde::feat {
namespace {

Points rows_in_order(const Points& x, const std::vector<Eigen::Index>& order) {
  Points out(x.rows(), 2);
  for (std::size_t k = 0; k < order.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.row(order[k]);
  return out;
}

std::string grid_header(const Grid& g) {
  return "G=" + std::to_string(g.size) + " bounds=" + io::fmt(g.xmin) + "," + io::fmt(g.xmax) +
         "," + io::fmt(g.ymin) + "," + io::fmt(g.ymax);
}

Grid parse_grid(const std::string& header, const std::string& path) {
  Grid g;
  g.size = std::stoi(io::header_value(header, "G"));
  const auto b = io::parse_numbers(io::header_value(header, "bounds"), path);
  if (b.size() != 4) throw FormatError(path + ": bounds must have 4 values");
  g.xmin = b[0];
  g.xmax = b[1];
  g.ymin = b[2];
  g.ymax = b[3];
  g.validate();
  return g;
}

}  // namespace

void Grid::validate() const {
  if (size < 2) throw DomainError("grid: size must be >= 2");
  if (!(xmax > xmin) || !(ymax > ymin)) throw DomainError("grid: empty bounds");
}

Points center(const Points& x) {
  if (x.rows() == 0) return x;
  const Eigen::RowVector2d mean = x.colwise().mean();
  return x.rowwise() - mean;
}

AlignedConfiguration kabsch_align(const Points& c, const Points& ref,
                                  const std::string& reference_id) {
  if (c.rows() != ref.rows()) throw DomainError("kabsch_align: particle counts differ");
  if (c.rows() < 2) throw DomainError("kabsch_align: need at least two points");
  auto collinear = [](const Points& p) {
    const Mat2 cov = p.transpose() * p;
    Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
    const double hi = es.eigenvalues()(1), lo = es.eigenvalues()(0);
    return !(hi > 0.0) || lo <= 1e-12 * hi;
  };
  if (collinear(c) || collinear(ref))
    throw DomainError("kabsch_align: degenerate (collinear) configuration");

  const Mat2 h = c.transpose() * ref;  // cross-covariance sum c_i ref_i^T
  Eigen::JacobiSVD<Mat2> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat2 u = svd.matrixU();
  const Mat2 v = svd.matrixV();
  Mat2 d = Mat2::Identity();
  d(1, 1) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  AlignedConfiguration out;
  out.rotation = v * d * u.transpose();
  out.positions = c * out.rotation.transpose();
  out.reference_id = reference_id;
  return out;
}

double alignment_residual(const Points& aligned, const Points& ref) {
  return (aligned - ref).squaredNorm();
}

Points canonical_order(const Points& x) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (x(a, 0) != x(b, 0)) return x(a, 0) < x(b, 0);
    return x(a, 1) < x(b, 1);
  });
  return rows_in_order(x, order);
}

Points sort_by_angle(const Points& centred) {
  const auto n = centred.rows();
  std::vector<double> angle(static_cast<std::size_t>(n)), radius(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    angle[static_cast<std::size_t>(i)] = std::atan2(centred(i, 1), centred(i, 0));
    radius[static_cast<std::size_t>(i)] = std::hypot(centred(i, 0), centred(i, 1));
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const auto ua = static_cast<std::size_t>(a), ub = static_cast<std::size_t>(b);
    if (angle[ua] != angle[ub]) return angle[ua] < angle[ub];
    if (radius[ua] != radius[ub]) return radius[ua] < radius[ub];
    if (centred(a, 0) != centred(b, 0)) return centred(a, 0) < centred(b, 0);
    return centred(a, 1) < centred(b, 1);
  });
  return rows_in_order(centred, order);
}

AlignedConfiguration align_to_reference(const Points& x, const Points& ref,
                                        const std::string& reference_id) {
  if (x.rows() != ref.rows())
    throw DomainError("align_to_reference: configuration has " + std::to_string(x.rows()) +
                      " particles, reference has " + std::to_string(ref.rows()));
  const Points sorted = sort_by_angle(center(canonical_order(x)));
  const auto n = sorted.rows();
  Points shifted(n, 2);
  AlignedConfiguration best;
  double best_residual = std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) shifted.row(i) = sorted.row((i + s) % n);
    AlignedConfiguration a = kabsch_align(shifted, ref, reference_id);
    const double r = alignment_residual(a.positions, ref);
    if (r < best_residual) {
      best_residual = r;
      best = std::move(a);
    }
  }
  return best;
}

double scott_bandwidth(int n, int d, double sigma) {
  if (n < 2) throw DomainError("scott_bandwidth: need n >= 2");
  if (d < 1) throw DomainError("scott_bandwidth: need d >= 1");
  return sigma * std::pow(static_cast<double>(n), -1.0 / (d + 4));
}

double spread(const Points& x) {
  const auto n = x.rows();
  if (n < 2) return 0.0;
  const Eigen::RowVector2d mean = x.colwise().mean();
  const Eigen::RowVector2d var =
      (x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n - 1);
  return 0.5 * (std::sqrt(var(0)) + std::sqrt(var(1)));
}

DensityField kde_density(const Points& aligned, const Grid& grid, double bandwidth) {
  grid.validate();
  const Points x = canonical_order(aligned);
  const auto n = x.rows();
  if (n < 1) throw DomainError("kde_density: empty configuration");
  if (n < 2 && !(bandwidth > 0))
    throw DomainError("kde_density: a single particle needs an explicit bandwidth");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!grid.contains(aligned(i, 0), aligned(i, 1)))
      throw DomainError("kde_density: particle " + std::to_string(i) + " at (" +
                        io::fmt(aligned(i, 0)) + ", " + io::fmt(aligned(i, 1)) +
                        ") lies outside the grid");
  }
  DensityField f;
  f.grid = grid;
  f.bandwidth = bandwidth > 0 ? bandwidth : scott_bandwidth(static_cast<int>(n), 2, spread(x));
  if (!(f.bandwidth > 0)) throw DomainError("kde_density: zero bandwidth (coincident particles)");
  const int g = grid.size;
  const double inv2h2 = 0.5 / (f.bandwidth * f.bandwidth);
  // The Gaussian kernel factorizes over axes: K(x, y) = gx(x) gy(y).
  Eigen::MatrixXd gx(n, g), gy(n, g);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < g; ++k) {
      const double ddx = grid.x(k) - x(i, 0);
      const double ddy = grid.y(k) - x(i, 1);
      gx(i, k) = std::exp(-ddx * ddx * inv2h2);
      gy(i, k) = std::exp(-ddy * ddy * inv2h2);
    }
  }
  // values(j * G + i) = sum_p gy(p, j) gx(p, i)
  const Eigen::MatrixXd dense = gx.transpose() * gy;  // (i, j)
  f.values.resize(static_cast<Eigen::Index>(g) * g);
  for (int j = 0; j < g; ++j)
    for (int i = 0; i < g; ++i) f.values(j * g + i) = dense(i, j);
  const double mass = f.integral();
  if (!(mass > 0)) throw NumericalError("kde_density: density vanishes on the grid");
  f.values /= mass;
  return f;
}

Grid reference_grid(const Points& ref, int size, double dilation) {
  if (ref.rows() == 0) throw DomainError("reference_grid: empty reference");
  const Eigen::RowVector2d lo = ref.colwise().minCoeff();
  const Eigen::RowVector2d hi = ref.colwise().maxCoeff();
  const Eigen::RowVector2d mid = 0.5 * (lo + hi);
  const Eigen::RowVector2d half = 0.5 * (hi - lo) * (1.0 + dilation);
  Grid g;
  g.size = size;
  g.xmin = mid(0) - half(0);
  g.xmax = mid(0) + half(0);
  g.ymin = mid(1) - half(1);
  g.ymax = mid(1) + half(1);
  g.validate();
  return g;
}

std::size_t select_reference(const std::vector<Points>& set) {
  if (set.empty()) throw DomainError("select_reference: empty configuration set");
  std::size_t best = 0;
  double best_rg = order::radius_of_gyration(set[0]);
  for (std::size_t i = 1; i < set.size(); ++i) {
    const double rg = order::radius_of_gyration(set[i]);
    if (rg < best_rg) {
      best_rg = rg;
      best = i;
    }
  }
  return best;
}

Featurizer::Featurizer(const Points& reference, const Grid& grid, std::string reference_id)
    : reference_(sort_by_angle(center(canonical_order(reference)))),
      grid_(grid),
      reference_id_(std::move(reference_id)) {
  grid_.validate();
}

Featurizer Featurizer::from_reference(const Points& reference, int size, double dilation) {
  const Points ref = sort_by_angle(center(canonical_order(reference)));
  return Featurizer(ref, reference_grid(ref, size, dilation));
}

DensityField Featurizer::featurize(const Points& x) const {
  const auto aligned = align_to_reference(x, reference_, reference_id_);
  return kde_density(aligned.positions, grid_);
}

ExternalFrames ingest_external(const std::string& path, double radius_scale) {
  if (!(radius_scale > 0)) throw DomainError("ingest_external: radius_scale must be > 0");
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open external trajectory '" + path + "'");
  ExternalFrames out;
  std::string line;
  int lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto v = io::parse_numbers(line, path + ":" + std::to_string(lineno));
    if (v.size() < 5 || v.size() % 2 == 0)
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected time followed by 2N coordinates");
    if (width == 0) width = v.size();
    if (v.size() != width)
      throw FormatError(path + ":" + std::to_string(lineno) + ": inconsistent particle count");
    bd::Configuration c;
    c.time = v[0];
    c.params_ref = "external";
    const auto n = static_cast<Eigen::Index>((v.size() - 1) / 2);
    c.positions.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      c.positions(i, 0) = radius_scale * v[static_cast<std::size_t>(1 + 2 * i)];
      c.positions(i, 1) = radius_scale * v[static_cast<std::size_t>(2 + 2 * i)];
    }
    if (!c.positions.allFinite()) throw FormatError(path + ": non-finite coordinate");
    out.frames.push_back(std::move(c));
  }
  if (out.frames.empty()) throw FormatError(path + ": no frames");
  std::vector<Points> pts;
  pts.reserve(out.frames.size());
  for (const auto& f : out.frames) pts.push_back(f.positions);
  out.reference_index = select_reference(pts);
  return out;
}

void write_density(const std::string& path, const DensityField& f) {
  const int g = f.grid.size;
  std::string out = "# esde-density " + grid_header(f.grid) + " bandwidth=" + io::fmt(f.bandwidth) + "\n";
  for (int j = 0; j < g; ++j) {
    for (int i = 0; i < g; ++i) {
      if (i) out += ' ';
      io::append(out, f.values(j * g + i));
    }
    out += '\n';
  }
  io::write_file(path, out);
}

DensityField read_density(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open density '" + path + "'");
  std::string header;
  if (!std::getline(in, header) || header.rfind("# esde-density ", 0) != 0)
    throw FormatError(path + ": missing density header");
  DensityField f;
  f.grid = parse_grid(header, path);
  f.bandwidth = std::stod(io::header_value(header, "bandwidth"));
  const int g = f.grid.size;
  f.values.resize(static_cast<Eigen::Index>(g) * g);
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (row >= g) throw FormatError(path + ": too many rows");
    const auto v = io::parse_numbers(line, path);
    if (static_cast<int>(v.size()) != g) throw FormatError(path + ": row width mismatch");
    for (int i = 0; i < g; ++i) f.values(row * g + i) = v[static_cast<std::size_t>(i)];
    ++row;
  }
  if (row != g) throw FormatError(path + ": expected " + std::to_string(g) + " rows");
  return f;
}

void write_density_set(const std::string& path, const DensitySet& s) {
  const auto m = s.values.rows();
  std::string out = "# esde-density-set " + grid_header(s.grid) + " count=" + std::to_string(m) + "\n";
  out.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(s.values.cols()) * 12);
  for (Eigen::Index r = 0; r < m; ++r) {
    out += std::to_string(s.ids[static_cast<std::size_t>(r)]);
    out += ' ';
    io::append(out, s.bandwidths[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < s.values.cols(); ++c) {
      out += ' ';
      io::append(out, s.values(r, c));
    }
    out += '\n';
  }
  io::write_file(path, out);
}

DensitySet read_density_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open density set '" + path + "'");
  std::string header;
  if (!std::getline(in, header) || header.rfind("# esde-density-set ", 0) != 0)
    throw FormatError(path + ": missing density-set header");
  DensitySet s;
  s.grid = parse_grid(header, path);
  const long long m = std::stoll(io::header_value(header, "count"));
  const long long width = static_cast<long long>(s.grid.size) * s.grid.size;
  s.values.resize(m, width);
  std::string line;
  long long r = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (r >= m) throw FormatError(path + ": more rows than count");
    const auto v = io::parse_numbers(line, path + " row " + std::to_string(r));
    if (static_cast<long long>(v.size()) != width + 2) throw FormatError(path + ": row width mismatch");
    s.ids.push_back(static_cast<long long>(v[0]));
    s.bandwidths.push_back(v[1]);
    for (long long c = 0; c < width; ++c) s.values(r, c) = v[static_cast<std::size_t>(c + 2)];
    ++r;
  }
  if (r != m) throw FormatError(path + ": expected " + std::to_string(m) + " rows");
  return s;
}

}  // namespace esde::feat
