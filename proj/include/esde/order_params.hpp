#pragma once

#include "esde/types.hpp"

#include <complex>
#include <vector>

namespace esde::order {

struct OrderParams {
  double rg = 0.0;
  double psi6 = 0.0;
  double c6 = 0.0;
};

struct OrderSettings {
  double neighbor_cutoff = 2.5;      // units of a
  double coherence_threshold = 0.32;
};

double radius_of_gyration(const Points& x);

/// Rg of an ideal hexagonally close-packed disk of n touching particles,
/// a * sqrt(sqrt(3) n / pi). Used to express Rg in crystal units.
double rg_hexagonal_reference(int n, double radius = 1.0);

/// Local bond-orientational order psi6_j = (1/n_j) sum_k exp(6 i theta_jk);
/// zero for particles without neighbours.
std::vector<std::complex<double>> psi6_local(const Points& x, double neighbor_cutoff);

/// |(1/N) sum_j psi6_j|.
double psi6_global(const Points& x, double neighbor_cutoff);

/// Per-particle min(#coherent neighbours, 6) / 6.
std::vector<double> c6_local(const Points& x, double neighbor_cutoff, double coherence_threshold);

/// Ensemble mean of c6_local.
double c6_ensemble(const Points& x, double neighbor_cutoff, double coherence_threshold);

OrderParams compute(const Points& x, const OrderSettings& s = {});

}  // namespace esde::order
