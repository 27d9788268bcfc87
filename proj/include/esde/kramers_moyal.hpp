#pragma once

#include "esde/sde_model.hpp"
#include "esde/types.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace esde::km {

struct PointEstimate {
  Vec2 drift = Vec2::Zero();  // <x(h) - x0> / h
  Vec2 sigma = Vec2::Zero();  // sqrt(<(x_i(h) - x0_i)^2> / h); diagonal model
};

/// First two conditional moments from burst endpoints started at x0. The
/// second moment is not drift-corrected, so sigma^2 carries an O(h |nu|^2) bias.
PointEstimate km_point_estimate(std::span<const Vec2> endpoints, const Vec2& x0, double h);

/// Nearest-anchor lookup table of drift and diagonal noise amplitude.
class TabulatedModel final : public sde::Model {
 public:
  TabulatedModel() = default;
  TabulatedModel(std::vector<Vec2> anchors, std::vector<PointEstimate> values);

  Vec2 drift(const Vec2& x, double p) const override;
  Mat2 sigma(const Vec2& x, double p) const override;

  /// Nearest anchor, ties by lowest index.
  std::size_t nearest(const Vec2& x) const;
  const PointEstimate& nn_evaluate(const Vec2& x) const { return values_[nearest(x)]; }

  std::size_t size() const { return anchors_.size(); }
  const std::vector<Vec2>& anchors() const { return anchors_; }
  const std::vector<PointEstimate>& values() const { return values_; }

 private:
  std::vector<Vec2> anchors_;
  std::vector<PointEstimate> values_;
};

/// Returns latent endpoints of n_replicas short runs of duration h from anchor i.
using BurstFn = std::function<std::vector<Vec2>(std::size_t anchor, const Vec2& x0, int n_replicas, double h)>;

TabulatedModel km_field(const std::vector<Vec2>& anchors, const BurstFn& burst, int n_replicas, double h);

/// Text table with columns phi1 phi2 nu1 nu2 sigma11 sigma22.
void write_model(const std::string& path, const TabulatedModel& m);
TabulatedModel read_model(const std::string& path);

}  // namespace esde::km
