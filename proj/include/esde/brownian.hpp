#pragma once

#include "esde/params.hpp"
#include "esde/rng.hpp"
#include "esde/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace esde::bd {

/// Planar particle positions (units of a) at a given simulation time.
struct Configuration {
  Points positions;
  std::string params_ref;
  double time = 0.0;

  int size() const { return static_cast<int>(positions.rows()); }
};

struct Trajectory {
  std::vector<Configuration> frames;
  double dt = 0.0;
  double save_interval = 0.0;
  std::string params_hash;
};

/// Two particles closer than the overlap floor.
class OverlapError : public DomainError {
 public:
  OverlapError(int i, int j, double r);
  int first, second;
  double distance;
};

/// Double-layer repulsion B exp[-kappa (r - 2a)].
double pair_electrostatic_energy(double r, const PhysicalParams& p);

/// Dipole-field energy -2 kT lambda / f_cm (4 r / d_g)^2.
double dipole_field_energy(const Vec2& r, const PhysicalParams& p);

/// Induced dipole-dipole energy, -kT lambda P2(cos theta) (2a/r)^3 |E/E0|^2.
/// Field magnitude and direction are taken at the pair midpoint, which keeps
/// the energy symmetric in (i, j).
double dipole_dipole_energy(const Vec2& ri, const Vec2& rj, const PhysicalParams& p);

double total_energy(const Points& x, const PhysicalParams& p);

/// Conservative forces -grad U, one row per particle. Throws OverlapError if
/// any pair is closer than `p.overlap_tolerance`.
Points total_forces(const Points& x, const PhysicalParams& p);

struct StepOptions {
  double noise_scale = 1.0;        // multiplies the Brownian displacement
  bool interactions = true;        // false: skip conservative forces entirely
  Vec2 external_velocity = Vec2::Zero();
  double max_drift_step = 0.0;     // > 0: per-particle cap on the force displacement
};

/// One free-draining Euler-Maruyama step:
/// r += (D0/kT) F dt + external_velocity dt + N(0, 2 D0 dt).
Configuration bd_step(const Configuration& c, double dt, Rng& rng, const PhysicalParams& p,
                      const StepOptions& opts = {});

/// Integrates from c0 over `horizon`, saving every `save_interval` (which must
/// be an integer multiple of dt). The first frame is c0.
Trajectory simulate(const Configuration& c0, double horizon, double dt, double save_interval,
                    std::uint64_t seed, const PhysicalParams& p, const StepOptions& opts = {});

/// n_replicas independent endpoints after evolving c for duration h.
/// Replica r uses stream derive_seed(seed, r).
std::vector<Configuration> burst(const Configuration& c, int n_replicas, double h, double dt,
                                 std::uint64_t seed, const PhysicalParams& p,
                                 const StepOptions& opts = {});

/// Random non-overlapping placement inside a disk of the given radius
/// (minimum centre distance `min_separation`).
Configuration random_initial(int n, double disk_radius, double min_separation, std::uint64_t seed);

void write_trajectory(const std::string& path, const Trajectory& t);
Trajectory read_trajectory(const std::string& path);

}  // namespace esde::bd
