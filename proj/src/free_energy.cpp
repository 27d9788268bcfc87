#include "esde/free_energy.hpp"

#include "esde/io.hpp"
#include "esde/parallel.hpp"

#include <cmath>
#include <limits>

namespace esde::fe {
namespace {

double spacing(const nn::GridSpec2& g) {
  const double dx = g.nx > 1 ? (g.xmax - g.xmin) / (g.nx - 1) : 0.0;
  const double dy = g.ny > 1 ? (g.ymax - g.ymin) / (g.ny - 1) : 0.0;
  double h = std::min(dx > 0 ? dx : dy, dy > 0 ? dy : dx);
  return h > 0 ? h : 1.0;
}

double fd_step(const nn::GridSpec2& g, const PotentialSettings& s) {
  return s.fd_step > 0 ? s.fd_step : spacing(g) / 10.0;
}

// Midpoint-rule integral of w . dr along a -> b.
double segment_integral(const sde::Model& m, const Vec2& a, const Vec2& b, double p, double step, int k) {
  const Vec2 d = b - a;
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double t = (i + 0.5) / k;
    sum += potential_gradient(m, a + t * d, p, step).dot(d);
  }
  return sum / k;
}

double abs_segment_integral(const sde::Model& m, const Vec2& a, const Vec2& b, double p, double step, int k) {
  const Vec2 d = b - a;
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    const double t = (i + 0.5) / k;
    sum += std::abs(potential_gradient(m, a + t * d, p, step).dot(d));
  }
  return sum / k;
}

}  // namespace

Vec2 divergence_sigma2(const sde::Model& m, const Vec2& x, double p, double step) {
  if (!(step > 0)) throw DomainError("divergence_sigma2: step must be > 0");
  const Vec2 ex(step, 0.0), ey(0.0, step);
  const Mat2 dx = (m.sigma2(x + ex, p) - m.sigma2(x - ex, p)) / (2.0 * step);
  const Mat2 dy = (m.sigma2(x + ey, p) - m.sigma2(x - ey, p)) / (2.0 * step);
  return {dx(0, 0) + dy(0, 1), dx(1, 0) + dy(1, 1)};
}

Vec2 potential_gradient(const sde::Model& m, const Vec2& x, double p, double step) {
  const Mat2 s2 = m.sigma2(x, p);
  const double det = s2.determinant();
  if (!std::isfinite(det) || std::abs(det) <= 1e-300)
    throw NumericalError("singular diffusion matrix at (" + io::fmt(x.x()) + ", " + io::fmt(x.y()) + ")");
  const Vec2 v = m.drift(x, p) - 0.5 * divergence_sigma2(m, x, p, step);
  const Vec2 w = 2.0 * s2.inverse() * v;
  if (!w.allFinite()) throw NumericalError("non-finite potential gradient");
  return w;
}

PotentialField effective_potential(const sde::Model& m, const nn::GridSpec2& grid, double p,
                                   const PotentialSettings& s) {
  if (s.substeps < 1) throw DomainError("effective_potential: substeps must be >= 1");
  if (!(grid.xmin <= 0 && grid.xmax >= 0 && grid.ymin <= 0 && grid.ymax >= 0))
    throw DomainError("effective_potential: grid does not contain the origin");
  PotentialField f;
  f.grid = grid;
  f.p = p;
  f.nodes = grid.nodes();
  const auto n = static_cast<long long>(f.nodes.size());
  f.values = VecX::Constant(n, std::numeric_limits<double>::quiet_NaN());
  f.evaluable.assign(static_cast<std::size_t>(n), 0);
  for (std::size_t i = 1; i < f.nodes.size(); ++i)
    if (f.nodes[i].squaredNorm() < f.nodes[f.reference].squaredNorm()) f.reference = i;

  const double step = fd_step(grid, s);
  parallel_for(n, [&](long long i) {
    const Vec2 x = f.nodes[static_cast<std::size_t>(i)];
    try {
      f.values(i) = -segment_integral(m, Vec2::Zero(), x, p, step, s.substeps);
      f.evaluable[static_cast<std::size_t>(i)] = 1;
    } catch (const NumericalError&) {
    }
  });
  if (!f.evaluable[f.reference])
    throw NumericalError("effective_potential: reference node is not evaluable");
  const double g0 = f.values(static_cast<Eigen::Index>(f.reference));
  f.values.array() -= g0;
  f.values(static_cast<Eigen::Index>(f.reference)) = 0.0;
  return f;
}

Diagnostics diagnose(const sde::Model& m, const nn::GridSpec2& grid, double p, const PotentialSettings& s) {
  Diagnostics d;
  const double step = fd_step(grid, s);
  const Vec2 c[4] = {{grid.xmin, grid.ymin}, {grid.xmax, grid.ymin}, {grid.xmax, grid.ymax}, {grid.xmin, grid.ymax}};
  try {
    for (int e = 0; e < 4; ++e) {
      d.loop_integral += segment_integral(m, c[e], c[(e + 1) % 4], p, step, s.substeps);
      d.loop_magnitude += abs_segment_integral(m, c[e], c[(e + 1) % 4], p, step, s.substeps);
    }
  } catch (const NumericalError&) {
    d.loop_integral = d.loop_magnitude = std::numeric_limits<double>::quiet_NaN();
  }
  double sum = 0.0;
  int count = 0;
  for (const auto& x : grid.nodes()) {
    const double nu = m.drift(x, p).norm();
    const double dv = 0.5 * divergence_sigma2(m, x, p, step).norm();
    if (!(nu > 0) || !std::isfinite(dv)) continue;
    const double r = dv / nu;
    sum += r;
    d.max_divergence_ratio = std::max(d.max_divergence_ratio, r);
    ++count;
  }
  d.divergence_ratio = count ? sum / count : std::numeric_limits<double>::quiet_NaN();
  return d;
}

void write_potential(const std::string& path, const PotentialField& f) {
  io::Table t;
  t.columns = {"phi1", "phi2", "G_kT", "evaluable"};
  for (std::size_t i = 0; i < f.nodes.size(); ++i)
    t.add_row({f.nodes[i].x(), f.nodes[i].y(), f.values(static_cast<Eigen::Index>(i)),
               static_cast<double>(f.evaluable[i])});
  io::write_table(path, t, "p=" + io::fmt(f.p) + " reference=" + std::to_string(f.reference));
}

}  // namespace esde::fe
