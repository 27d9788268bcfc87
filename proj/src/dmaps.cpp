#include "esde/dmaps.hpp"

#include "esde/hash.hpp"
#include "esde/io.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace esde::dmaps {
namespace {

constexpr double kMinEigenvalue = 1e-10;

MatX squared_distances(const MatX& a, const VecX& a_norms, const MatX& b, const VecX& b_norms) {
  MatX d = -2.0 * (a * b.transpose());
  d.colwise() += a_norms;
  d.rowwise() += b_norms.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

MatX build_kernel(const MatX& fields, double epsilon) {
  if (!(epsilon > 0)) throw DomainError("build_kernel: epsilon must be > 0");
  const VecX norms = fields.rowwise().squaredNorm();
  MatX d = squared_distances(fields, norms, fields, norms);
  d.diagonal().setZero();
  // Exact symmetry regardless of rounding in the Gram product.
  d = 0.5 * (d + d.transpose()).eval();
  return (-d / (2.0 * epsilon)).array().exp().matrix();
}

Normalized normalize(const MatX& kernel, double alpha) {
  if (kernel.rows() != kernel.cols()) throw DomainError("normalize: kernel must be square");
  Normalized out;
  out.degrees = kernel.rowwise().sum();
  if ((out.degrees.array() <= 0).any()) throw NumericalError("normalize: zero row degree");
  const VecX scale = out.degrees.array().pow(-alpha);
  MatX tilde = scale.asDiagonal() * kernel * scale.asDiagonal();
  out.tilde_degrees = tilde.rowwise().sum();
  if ((out.tilde_degrees.array() <= 0).any()) throw NumericalError("normalize: zero row degree");
  out.markov = out.tilde_degrees.cwiseInverse().asDiagonal() * tilde;
  return out;
}

Eigenpairs eigendecompose(const Normalized& w, int k) {
  const auto m = w.markov.rows();
  if (k < 1 || k >= m) throw DomainError("eigendecompose: need 1 <= k < M");
  const VecX sqrt_d = w.tilde_degrees.cwiseSqrt();
  const VecX inv_sqrt_d = sqrt_d.cwiseInverse();
  MatX s = sqrt_d.asDiagonal() * w.markov * inv_sqrt_d.asDiagonal();
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<MatX> es(s);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecompose: solver did not converge");
  Eigenpairs out;
  out.values.resize(k);
  out.vectors.resize(m, k);
  for (int i = 0; i < k; ++i) {
    const auto col = m - 1 - i;
    out.values(i) = es.eigenvalues()(col);
    VecX phi = inv_sqrt_d.asDiagonal() * es.eigenvectors().col(col);
    phi /= std::sqrt(w.tilde_degrees.dot(phi.cwiseProduct(phi)) / w.tilde_degrees.sum());
    for (Eigen::Index r = 0; r < m; ++r) {
      if (std::abs(phi(r)) > 1e-12) {
        if (phi(r) < 0) phi = -phi;
        break;
      }
    }
    out.vectors.col(i) = phi;
  }
  return out;
}

double local_linear_residual(const MatX& predictors, const VecX& target,
                             double neighborhood_fraction) {
  const auto m = predictors.rows();
  const auto d = predictors.cols();
  if (m < 3) throw DomainError("local_linear_residual: need at least 3 points");
  const auto k = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::ceil(neighborhood_fraction * static_cast<double>(m))), d + 2, m - 1);

  const VecX norms = predictors.rowwise().squaredNorm();
  const MatX dist2 = squared_distances(predictors, norms, predictors, norms);

  // Kernel scale: median pairwise distance / 3.
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) all.push_back(dist2(i, j));
  auto mid = all.begin() + static_cast<std::ptrdiff_t>(all.size() / 2);
  std::nth_element(all.begin(), mid, all.end());
  const double scale = std::sqrt(*mid) / 3.0;
  const double inv_scale2 = scale > 0 ? 1.0 / (scale * scale) : 0.0;

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::swap(idx[static_cast<std::size_t>(i)], idx.back());  // exclude self
    std::nth_element(idx.begin(), idx.begin() + (k - 1), idx.end() - 1,
                     [&](Eigen::Index a, Eigen::Index b) {
                       if (dist2(i, a) != dist2(i, b)) return dist2(i, a) < dist2(i, b);
                       return a < b;
                     });
    MatX x(k, d + 1);
    VecX y(k), w(k);
    for (Eigen::Index r = 0; r < k; ++r) {
      const Eigen::Index j = idx[static_cast<std::size_t>(r)];
      x(r, 0) = 1.0;
      x.row(r).tail(d) = predictors.row(j) - predictors.row(i);
      y(r) = target(j);
      w(r) = std::exp(-dist2(i, j) * inv_scale2);
    }
    if (w.sum() < 1e-300) w.setOnes();
    const MatX xtw = x.transpose() * w.asDiagonal();
    MatX normal = xtw * x;
    normal.diagonal().array() += 1e-12 * std::max(1.0, normal.diagonal().maxCoeff());
    const VecX coef = normal.ldlt().solve(xtw * y);
    const double e = target(i) - coef(0);
    num += e * e;
    den += target(i) * target(i);
  }
  return den > 0 ? std::sqrt(num / den) : 0.0;
}

Selection select_nonharmonic(const MatX& eigvecs, const VecX& eigvals, const SelectionSettings& s) {
  const auto k = eigvecs.cols();
  if (k < 3 || eigvals.size() != k) throw DomainError("select_nonharmonic: need >= 3 eigenvectors");
  Selection out;
  out.residuals.assign(static_cast<std::size_t>(k), std::numeric_limits<double>::quiet_NaN());
  std::vector<int> chosen;
  for (int j = 1; j < k; ++j) {
    double r = 1.0;
    if (!chosen.empty()) {
      MatX pred(eigvecs.rows(), static_cast<Eigen::Index>(chosen.size()));
      for (std::size_t c = 0; c < chosen.size(); ++c) pred.col(static_cast<Eigen::Index>(c)) = eigvecs.col(chosen[c]);
      r = local_linear_residual(pred, eigvecs.col(j), s.neighborhood_fraction);
    }
    out.residuals[static_cast<std::size_t>(j)] = r;
    if (chosen.size() < 2 && r > s.threshold) chosen.push_back(j);
  }
  if (chosen.size() < 2) {
    std::ostringstream os;
    os << "select_nonharmonic: fewer than two non-harmonic coordinates (residuals:";
    for (int j = 1; j < k; ++j) os << ' ' << io::fmt(out.residuals[static_cast<std::size_t>(j)]);
    os << ")";
    throw NumericalError(os.str());
  }
  out.indices = {chosen[0], chosen[1]};
  return out;
}

double choose_epsilon(const MatX& fields) {
  const auto m = fields.rows();
  if (m < 2) throw DomainError("choose_epsilon: need at least two fields");
  constexpr Eigen::Index kExactLimit = 4000;
  MatX sub;
  if (m <= kExactLimit) {
    sub = fields;
  } else {
    const double stride = static_cast<double>(m) / kExactLimit;
    sub.resize(kExactLimit, fields.cols());
    for (Eigen::Index i = 0; i < kExactLimit; ++i)
      sub.row(i) = fields.row(static_cast<Eigen::Index>(std::floor(i * stride)));
  }
  const VecX norms = sub.rowwise().squaredNorm();
  const MatX d = squared_distances(sub, norms, sub, norms);
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(sub.rows() * (sub.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < sub.rows(); ++i)
    for (Eigen::Index j = i + 1; j < sub.rows(); ++j) all.push_back(d(i, j));
  const std::size_t n = all.size();
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n / 2), all.end());
  double med = all[n / 2];
  if (n % 2 == 0) {
    const double lower = *std::max_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n / 2));
    med = 0.5 * (med + lower);
  }
  if (!(med > 0)) throw NumericalError("choose_epsilon: all fields coincide");
  return med;
}

std::string fields_hash(const MatX& fields) {
  Fnv1a h;
  const std::string shape = std::to_string(fields.rows()) + "x" + std::to_string(fields.cols());
  h.update(shape);
  for (Eigen::Index r = 0; r < fields.rows(); ++r) {
    const VecX row = fields.row(r);
    h.update(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return h.hex();
}

MatX DiffusionMapModel::embedding() const {
  MatX e(eigenvectors.rows(), 2);
  e.col(0) = eigenvectors.col(selection.indices[0]);
  e.col(1) = eigenvectors.col(selection.indices[1]);
  return e;
}

DiffusionMapModel build(const MatX& fields, const Settings& s) {
  if (fields.rows() < 2) throw DomainError("dmaps::build: need at least two fields");
  DiffusionMapModel m;
  m.training = fields;
  m.training_sq_norms = fields.rowwise().squaredNorm();
  m.training_hash = fields_hash(fields);
  m.epsilon = s.epsilon > 0 ? s.epsilon : choose_epsilon(fields);
  m.alpha = s.alpha;
  const Normalized w = normalize(build_kernel(fields, m.epsilon), s.alpha);
  m.degrees = w.degrees;
  const int k = std::min<int>(s.n_eigenpairs, static_cast<int>(fields.rows()) - 1);
  const Eigenpairs e = eigendecompose(w, k);
  m.eigenvalues = e.values;
  m.eigenvectors = e.vectors;
  if (s.require_selection) {
    m.selection = select_nonharmonic(e.vectors, e.values, s.selection);
  } else {
    m.selection.indices = {1, std::min(2, k - 1)};
  }
  return m;
}

namespace {

// (1/lambda) W~(f, .) phi for the given eigenpairs.
MatX extend(const DiffusionMapModel& m, const MatX& fields, const MatX& vectors, const VecX& values) {
  if (fields.cols() != m.training.cols())
    throw DomainError("nystrom: field dimension " + std::to_string(fields.cols()) +
                      " does not match training dimension " + std::to_string(m.training.cols()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (std::abs(values(i)) < kMinEigenvalue)
      throw NumericalError("nystrom: eigenvalue " + io::fmt(values(i)) +
                           " below 1e-10 (ill-conditioned extension)");
  }
  const VecX norms = fields.rowwise().squaredNorm();
  const MatX d = squared_distances(fields, norms, m.training, m.training_sq_norms);
  MatX a = (-d / (2.0 * m.epsilon)).array().exp().matrix();
  const VecX p_new = a.rowwise().sum();
  if ((p_new.array() <= 0).any())
    throw NumericalError("nystrom: new field has zero affinity to the training set");
  const VecX col_scale = m.degrees.array().pow(-m.alpha);
  const VecX row_scale = p_new.array().pow(-m.alpha);
  a = row_scale.asDiagonal() * a * col_scale.asDiagonal();
  const VecX rows = a.rowwise().sum();
  a = rows.cwiseInverse().asDiagonal() * a;
  return (a * vectors) * values.cwiseInverse().asDiagonal();
}

}  // namespace

MatX nystrom_all(const DiffusionMapModel& m, const MatX& fields) {
  return extend(m, fields, m.eigenvectors, m.eigenvalues);
}

MatX nystrom_restrict_batch(const DiffusionMapModel& m, const MatX& fields) {
  const auto& sel = m.selection.indices;
  VecX values(2);
  values << m.eigenvalues(sel[0]), m.eigenvalues(sel[1]);
  return extend(m, fields, m.embedding(), values);
}

LatentPoint nystrom_restrict(const DiffusionMapModel& m, const VecX& field) {
  const MatX r = nystrom_restrict_batch(m, field.transpose());
  return {r(0, 0), r(0, 1), Source::restricted};
}

std::size_t nearest_index(const MatX& embedding, const Vec2& q) {
  if (embedding.rows() == 0) throw DomainError("lift_nearest: empty training set");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
    const double dx = embedding(i, 0) - q.x(), dy = embedding(i, 1) - q.y();
    const double d = dx * dx + dy * dy;
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

void save_model(const std::string& path, const DiffusionMapModel& m) {
  nlohmann::json j;
  j["format"] = "esde-dmaps";
  j["version"] = 1;
  j["epsilon"] = m.epsilon;
  j["alpha"] = m.alpha;
  j["training_hash"] = m.training_hash;
  j["training_shape"] = {m.training.rows(), m.training.cols()};
  j["degrees"] = std::vector<double>(m.degrees.data(), m.degrees.data() + m.degrees.size());
  j["eigenvalues"] = std::vector<double>(m.eigenvalues.data(), m.eigenvalues.data() + m.eigenvalues.size());
  nlohmann::json vecs = nlohmann::json::array();
  for (Eigen::Index c = 0; c < m.eigenvectors.cols(); ++c) {
    const VecX v = m.eigenvectors.col(c);
    vecs.push_back(std::vector<double>(v.data(), v.data() + v.size()));
  }
  j["eigenvectors"] = vecs;
  j["selected"] = {m.selection.indices[0], m.selection.indices[1]};
  nlohmann::json res = nlohmann::json::array();
  for (double r : m.selection.residuals) {
    if (std::isnan(r)) res.push_back(nullptr);
    else res.push_back(r);
  }
  j["residuals"] = res;
  io::write_file(path, j.dump(1) + "\n");
}

DiffusionMapModel load_model(const std::string& path, const MatX& training) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (j.value("format", "") != "esde-dmaps") throw FormatError(path + ": not a diffusion-map archive");
  DiffusionMapModel m;
  try {
    m.epsilon = j.at("epsilon").get<double>();
    m.alpha = j.at("alpha").get<double>();
    m.training_hash = j.at("training_hash").get<std::string>();
    const auto deg = j.at("degrees").get<std::vector<double>>();
    m.degrees = Eigen::Map<const VecX>(deg.data(), static_cast<Eigen::Index>(deg.size()));
    const auto ev = j.at("eigenvalues").get<std::vector<double>>();
    m.eigenvalues = Eigen::Map<const VecX>(ev.data(), static_cast<Eigen::Index>(ev.size()));
    const auto& vecs = j.at("eigenvectors");
    m.eigenvectors.resize(m.degrees.size(), static_cast<Eigen::Index>(vecs.size()));
    for (std::size_t c = 0; c < vecs.size(); ++c) {
      const auto v = vecs[c].get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != m.degrees.size()) throw FormatError(path + ": eigenvector length mismatch");
      m.eigenvectors.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    const auto sel = j.at("selected").get<std::vector<int>>();
    if (sel.size() != 2) throw FormatError(path + ": expected two selected indices");
    m.selection.indices = {sel[0], sel[1]};
    for (const auto& r : j.at("residuals"))
      m.selection.residuals.push_back(r.is_null() ? std::numeric_limits<double>::quiet_NaN() : r.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  for (int s : m.selection.indices) {
    if (s < 0 || s >= m.eigenvectors.cols()) throw FormatError(path + ": selected index out of range");
  }
  if (fields_hash(training) != m.training_hash)
    throw FormatError(path + ": training densities do not match the archived hash");
  m.training = training;
  m.training_sq_norms = training.rowwise().squaredNorm();
  return m;
}

}  // namespace esde::dmaps
