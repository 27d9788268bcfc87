#pragma once

#include "esde/rng.hpp"
#include "esde/types.hpp"

#include <cstdint>
#include <vector>

namespace esde::sde {

/// Training atom: a latent point, its value h time units later, and the parameter.
struct SnapshotPair {
  Vec2 x0 = Vec2::Zero();
  Vec2 x1 = Vec2::Zero();
  double h = 1.0;
  double p = 0.0;
};

void validate(const SnapshotPair& s);

/// Evaluable effective SDE dx = nu(x, p) dt + sigma(x, p) dB in two latent dimensions.
class Model {
 public:
  virtual ~Model() = default;
  virtual Vec2 drift(const Vec2& x, double p) const = 0;
  /// Noise factor; the diffusion matrix is sigma sigma^T.
  virtual Mat2 sigma(const Vec2& x, double p) const = 0;

  Mat2 sigma2(const Vec2& x, double p) const {
    const Mat2 s = sigma(x, p);
    return s * s.transpose();
  }
};

/// Linear drift A(p) x + b with constant noise factor S(p).
/// With `parametric` set, A(p) = p A0 and S(p) = S0 / sqrt(p).
class LinearModel final : public Model {
 public:
  LinearModel(Mat2 a0, Mat2 s0, Vec2 offset = Vec2::Zero(), bool parametric = false)
      : a0_(std::move(a0)), s0_(std::move(s0)), offset_(std::move(offset)), parametric_(parametric) {}

  Vec2 drift(const Vec2& x, double p) const override;
  Mat2 sigma(const Vec2& x, double p) const override;
  Mat2 drift_matrix(double p) const { return parametric_ ? Mat2(p * a0_) : a0_; }

 private:
  Mat2 a0_, s0_;
  Vec2 offset_;
  bool parametric_;
};

/// Euler-Maruyama path x_{k+1} = x_k + nu h + sigma sqrt(h) z_k; returns n_steps + 1 points.
std::vector<Vec2> em_integrate(const Model& m, const Vec2& x0, double h, int n_steps, Rng& rng,
                               double p);
std::vector<Vec2> em_integrate(const Model& m, const Vec2& x0, double h, int n_steps,
                               std::uint64_t seed, double p);

/// Snapshot pairs from a model: each start point is advanced by `h` using
/// `substeps` Euler-Maruyama sub-steps. Start i uses stream derive_seed(seed, i).
std::vector<SnapshotPair> sample_pairs(const Model& m, const std::vector<Vec2>& starts, double h,
                                       int substeps, double p, std::uint64_t seed);

}  // namespace esde::sde
