#pragma once

#include "esde/nn_sde.hpp"
#include "esde/sde_model.hpp"

#include <string>
#include <vector>

namespace esde::fe {

/// G/kT on grid nodes; NaN where the integrand was not evaluable.
struct PotentialField {
  nn::GridSpec2 grid;
  std::vector<Vec2> nodes;  // x fastest
  VecX values;
  std::vector<char> evaluable;
  std::size_t reference = 0;  // node nearest the origin, G = 0 there
  double p = 0.0;
};

struct PotentialSettings {
  int substeps = 200;
  double fd_step = 0.0;  // <= 0: min grid spacing / 10
};

/// Central-difference divergence of sigma sigma^T: component i = sum_j d(sigma2)_ij / dx_j.
Vec2 divergence_sigma2(const sde::Model& m, const Vec2& x, double p, double step);

/// Integrand 2 (sigma2)^-1 (nu - div(sigma2)/2); throws NumericalError if sigma2 is singular.
Vec2 potential_gradient(const sde::Model& m, const Vec2& x, double p, double step);

/// G(x)/kT = -int_0^x integrand . dr along the straight segment from the origin,
/// composite midpoint rule. The origin must lie inside the grid.
PotentialField effective_potential(const sde::Model& m, const nn::GridSpec2& grid, double p,
                                   const PotentialSettings& s = {});

struct Diagnostics {
  double loop_integral = 0.0;     // circulation of the integrand around the grid boundary
  double loop_magnitude = 0.0;    // integral of |integrand . dr| around the same loop
  double divergence_ratio = 0.0;  // mean |div(sigma2)/2| / |nu| over evaluable nodes
  double max_divergence_ratio = 0.0;
};

Diagnostics diagnose(const sde::Model& m, const nn::GridSpec2& grid, double p,
                     const PotentialSettings& s = {});

/// Table with columns phi1 phi2 G_kT evaluable.
void write_potential(const std::string& path, const PotentialField& f);

}  // namespace esde::fe
