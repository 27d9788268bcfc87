#pragma once

#include "esde/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace esde::dmaps {

enum class Source { training, restricted, integrated };

struct LatentPoint {
  double phi1 = 0.0;
  double phi2 = 0.0;
  Source source = Source::restricted;

  Vec2 vec() const { return {phi1, phi2}; }
};

/// Gaussian affinity A_ij = exp(-|f_i - f_j|^2 / (2 eps)); fields are rows of F.
MatX build_kernel(const MatX& fields, double epsilon);

struct Normalized {
  MatX markov;        // W, row stochastic
  VecX degrees;       // P_ii = sum_j A_ij
  VecX tilde_degrees; // row sums of P^-a A P^-a
};

/// P^-alpha A P^-alpha, then row normalization.
Normalized normalize(const MatX& kernel, double alpha = 1.0);

struct Eigenpairs {
  VecX values;   // descending
  MatX vectors;  // one eigenvector per column, unit degree-weighted RMS
};

/// Top-k eigenpairs of W via its symmetric conjugate D^1/2 W D^-1/2, where D
/// holds `tilde_degrees`. Each eigenvector's first component above 1e-12 in
/// magnitude is made positive.
Eigenpairs eigendecompose(const Normalized& w, int k);

struct Selection {
  std::array<int, 2> indices{};   // columns of the eigenvector matrix
  std::vector<double> residuals;  // per column; NaN for column 0
};

struct SelectionSettings {
  double threshold = 0.5;
  double neighborhood_fraction = 0.1;
};

/// Leave-one-out local linear regression residual of `target` on `predictors`
/// (one predictor per column), normalized by |target|.
double local_linear_residual(const MatX& predictors, const VecX& target,
                             double neighborhood_fraction = 0.1);

/// Picks the first two non-harmonic eigenvectors (column 0 is the trivial one).
/// Throws NumericalError listing the residuals when fewer than two pass.
Selection select_nonharmonic(const MatX& eigvecs, const VecX& eigvals,
                             const SelectionSettings& s = {});

/// Median of pairwise squared distances; rows beyond 4000 are subsampled with a fixed stride.
double choose_epsilon(const MatX& fields);

struct Settings {
  double epsilon = 0.0;  // <= 0: choose_epsilon
  double alpha = 1.0;
  int n_eigenpairs = 10;
  SelectionSettings selection;
  bool require_selection = true;
};

struct DiffusionMapModel {
  MatX training;  // M x D density vectors
  VecX training_sq_norms;
  double epsilon = 0.0;
  double alpha = 1.0;
  VecX degrees;
  VecX eigenvalues;
  MatX eigenvectors;  // M x k
  Selection selection;
  std::string training_hash;

  int size() const { return static_cast<int>(training.rows()); }
  /// Training embedding in the selected coordinates (M x 2).
  MatX embedding() const;
};

std::string fields_hash(const MatX& fields);

DiffusionMapModel build(const MatX& fields, const Settings& s = {});

/// Nystrom extension of all k eigenvectors for each row of `fields`.
/// Throws if any used eigenvalue has magnitude below 1e-10.
MatX nystrom_all(const DiffusionMapModel& m, const MatX& fields);

/// Restriction into the two selected coordinates.
LatentPoint nystrom_restrict(const DiffusionMapModel& m, const VecX& field);
MatX nystrom_restrict_batch(const DiffusionMapModel& m, const MatX& fields);

/// Index of the training embedding nearest to q (ties: lowest index).
std::size_t nearest_index(const MatX& embedding, const Vec2& q);

template <typename Config>
const Config& lift_nearest(const MatX& embedding, const Vec2& q, const std::vector<Config>& configs) {
  if (configs.empty() || embedding.rows() == 0) throw DomainError("lift_nearest: empty training set");
  if (static_cast<std::size_t>(embedding.rows()) != configs.size())
    throw DomainError("lift_nearest: embedding and configuration counts differ");
  return configs[nearest_index(embedding, q)];
}

/// JSON archive without the training fields; `training_hash` identifies them.
void save_model(const std::string& path, const DiffusionMapModel& m);
/// Loads the archive and attaches `training`, verifying its hash.
DiffusionMapModel load_model(const std::string& path, const MatX& training);

}  // namespace esde::dmaps
