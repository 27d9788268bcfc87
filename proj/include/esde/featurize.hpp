#pragma once

#include "esde/brownian.hpp"
#include "esde/types.hpp"

#include <limits>
#include <string>
#include <vector>

namespace esde::feat {

/// Regular G x G node grid over [xmin, xmax] x [ymin, ymax].
struct Grid {
  int size = 64;
  double xmin = -1, xmax = 1, ymin = -1, ymax = 1;

  double dx() const { return (xmax - xmin) / (size - 1); }
  double dy() const { return (ymax - ymin) / (size - 1); }
  double x(int i) const { return xmin + i * dx(); }
  double y(int j) const { return ymin + j * dy(); }
  bool contains(double px, double py) const {
    return px >= xmin && px <= xmax && py >= ymin && py <= ymax;
  }
  void validate() const;
};

struct AlignedConfiguration {
  Points positions;  // centred and rotated
  Mat2 rotation = Mat2::Identity();
  std::string reference_id;
};

/// Normalized KDE on a grid; values are row-major, index j * G + i for node (x_i, y_j).
struct DensityField {
  Grid grid;
  double bandwidth = 0.0;
  VecX values;

  double integral() const { return values.sum() * grid.dx() * grid.dy(); }
  double at(int i, int j) const { return values(j * grid.size + i); }
};

Points center(const Points& x);

/// Rotation R (det +1) minimizing sum |R c_i - ref_i|^2 for index-corresponding,
/// centred point sets. Throws DomainError for collinear inputs.
AlignedConfiguration kabsch_align(const Points& c, const Points& ref,
                                  const std::string& reference_id = {});

double alignment_residual(const Points& aligned, const Points& ref);

/// Lexicographic (x, y) ordering; makes downstream sums independent of the
/// input particle order.
Points canonical_order(const Points& x);

/// Reorders rows by (polar angle, radius) about the centroid.
Points sort_by_angle(const Points& centred);

/// Centre, order by angle, then Kabsch against `ref` (itself centred and
/// angle-sorted), trying every cyclic relabelling of the angular order and
/// keeping the lowest residual. Particle counts must match.
AlignedConfiguration align_to_reference(const Points& x, const Points& ref,
                                        const std::string& reference_id = {});

/// sigma n^(-1/(d+4)).
double scott_bandwidth(int n, int d, double sigma);

/// Mean of the per-axis sample standard deviations.
double spread(const Points& x);

/// Isotropic Gaussian KDE with Scott bandwidth, evaluated at the grid nodes and
/// renormalized to unit Riemann sum. Throws if any particle lies outside the grid.
/// A positive `bandwidth` overrides Scott's rule (needed for a single particle).
DensityField kde_density(const Points& aligned, const Grid& grid, double bandwidth = 0.0);

/// Bounding box of the reference dilated by `dilation` (0.5 = 50%) on each half-width.
Grid reference_grid(const Points& ref, int size = 64, double dilation = 0.5);

/// Index of the configuration with the smallest Rg; ties by earliest index.
std::size_t select_reference(const std::vector<Points>& set);

/// Shared reference and grid; turns raw configurations into density vectors.
class Featurizer {
 public:
  Featurizer(const Points& reference, const Grid& grid, std::string reference_id = "ref");
  /// Builds a featurizer whose grid is `reference_grid(reference, size, dilation)`.
  static Featurizer from_reference(const Points& reference, int size = 64, double dilation = 0.5);

  DensityField featurize(const Points& x) const;
  const Points& reference() const { return reference_; }
  const Grid& grid() const { return grid_; }

 private:
  Points reference_;  // centred, angle-sorted
  Grid grid_;
  std::string reference_id_;
};

struct ExternalFrames {
  std::vector<bd::Configuration> frames;
  std::size_t reference_index = 0;  // min-Rg frame
};

/// Reads an externally recorded trajectory (esde trajectory file or a plain
/// table of `time x1 y1 ... xN yN` rows) and rescales positions by `radius_scale`.
ExternalFrames ingest_external(const std::string& path, double radius_scale);

void write_density(const std::string& path, const DensityField& f);
DensityField read_density(const std::string& path);

/// Many fields on one grid: header + one row per field (id, bandwidth, G^2 values).
struct DensitySet {
  Grid grid;
  std::vector<long long> ids;
  std::vector<double> bandwidths;
  MatX values;  // one field per row
};
void write_density_set(const std::string& path, const DensitySet& s);
DensitySet read_density_set(const std::string& path);

}  // namespace esde::feat
