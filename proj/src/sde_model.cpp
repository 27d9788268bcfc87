#include "esde/sde_model.hpp"

#include "esde/io.hpp"

#include <cmath>
#include <exception>
#include <string>

namespace esde::sde {

void validate(const SnapshotPair& s) {
  if (!(s.h > 0) || !std::isfinite(s.h)) throw DomainError("snapshot pair: h must be > 0");
  if (!s.x0.allFinite() || !s.x1.allFinite() || !std::isfinite(s.p))
    throw DomainError("snapshot pair: non-finite entry");
}

Vec2 LinearModel::drift(const Vec2& x, double p) const { return drift_matrix(p) * x + offset_; }

Mat2 LinearModel::sigma(const Vec2&, double p) const {
  if (!parametric_) return s0_;
  if (!(p > 0)) throw DomainError("LinearModel: parametric family needs p > 0");
  return s0_ / std::sqrt(p);
}

std::vector<Vec2> em_integrate(const Model& m, const Vec2& x0, double h, int n_steps, Rng& rng,
                               double p) {
  if (!(h > 0)) throw DomainError("em_integrate: h must be > 0");
  if (n_steps < 0) throw DomainError("em_integrate: n_steps must be >= 0");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sqrt_h = std::sqrt(h);
  std::vector<Vec2> path;
  path.reserve(static_cast<std::size_t>(n_steps) + 1);
  path.push_back(x0);
  Vec2 x = x0;
  for (int k = 0; k < n_steps; ++k) {
    Vec2 nu;
    Mat2 sig;
    try {
      nu = m.drift(x, p);
      sig = m.sigma(x, p);
    } catch (const std::exception& e) {
      throw NumericalError("em_integrate: model evaluation failed at step " + std::to_string(k) +
                           ": " + e.what());
    }
    if (!nu.allFinite() || !sig.allFinite())
      throw NumericalError("em_integrate: non-finite model output at step " + std::to_string(k));
    Vec2 z;
    z.x() = normal(rng);
    z.y() = normal(rng);
    x = x + nu * h + sig * z * sqrt_h;
    path.push_back(x);
  }
  return path;
}

std::vector<Vec2> em_integrate(const Model& m, const Vec2& x0, double h, int n_steps,
                               std::uint64_t seed, double p) {
  Rng rng = make_rng(seed);
  return em_integrate(m, x0, h, n_steps, rng, p);
}

std::vector<SnapshotPair> sample_pairs(const Model& m, const std::vector<Vec2>& starts, double h,
                                       int substeps, double p, std::uint64_t seed) {
  if (substeps < 1) throw DomainError("sample_pairs: substeps must be >= 1");
  std::vector<SnapshotPair> out;
  out.reserve(starts.size());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Rng rng = make_rng(seed, i);
    const auto path = em_integrate(m, starts[i], h / substeps, substeps, rng, p);
    out.push_back({starts[i], path.back(), h, p});
  }
  return out;
}

}  // namespace esde::sde
