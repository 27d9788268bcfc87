#pragma once

#include "esde/brownian.hpp"
#include "esde/config.hpp"
#include "esde/dmaps.hpp"
#include "esde/nn_sde.hpp"
#include "esde/order_params.hpp"
#include "esde/params.hpp"
#include "esde/sde_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace esde::pipeline {

struct PipelineConfig {
  PhysicalParams physics;                 // v_star is overridden per voltage
  std::vector<double> voltages{0.5, 0.6, 0.7, 0.8};
  double primary_voltage = 0.8;           // single-voltage models

  // Sampling
  int trajectories_per_voltage = 38;
  int frames = 200;                       // saved frames per trajectory after the first
  double save_interval = 0.05;            // a^2/D0; one latent time unit
  double dt = 5e-5;
  double max_drift_step = 0.02;
  double init_radius_min = 8.5;
  double init_radius_max = 10.5;
  double rg_threshold = 1.39;             // in units of the close-packed Rg
  int corpus_target = 2000;
  int histogram_bins = 20;
  order::OrderSettings order;

  // Featurization and manifold
  int grid_size = 64;
  double grid_dilation = 0.5;
  dmaps::Settings dmaps;

  // Estimators (h in latent time units)
  double h_diff = 0.125;
  double km_h = 0.1;
  int km_anchors = 150;
  int km_replicas = 50;
  int diff_anchors = 200;
  int diff_replicas = 6;
  std::vector<int> drift_stride{1, 1, 1, 1};     // h of drift pairs per voltage (frames)
  nn::TrainConfig train;
  nn::TrainConfig param_train;
  int uq_models = 0;

  // Comparisons
  int compare_paths = 60;
  int param_compare_paths = 20;
  int compare_frames = 100;
  std::string external_path;              // empty: synthesize one
  double external_radius_scale = 1.0 / 1.4;
  int external_particles = 28;
  double external_voltage = 0.74;

  std::uint64_t seed = 1;

  void validate() const;
  std::string hash() const;
  PhysicalParams physics_at(double v_star) const;
  std::size_t primary_index() const;
  static PipelineConfig from_config(const KeyValueConfig& cfg);
  /// Every key with its resolved value.
  KeyValueConfig to_config() const;
  /// Documented keys accepted by from_config.
  static const std::vector<std::pair<std::string, std::string>>& reference();
};

/// Greedy per-bin capping on a bins x bins histogram of (Rg, psi6) over the
/// given ranges. Returns kept indices in input order; no bin exceeds the cap,
/// which is the smallest cap reaching `target` kept points (or the largest bin).
std::vector<std::size_t> subsample_uniform(const std::vector<double>& rg, const std::vector<double>& psi6,
                                           int bins, std::size_t target, int* cap_out = nullptr);

/// Per-time mean and min/max envelope over paths (NaN entries skipped).
struct PathStats {
  std::vector<double> t;
  MatX mean;  // n_times x 2
  MatX lo;
  MatX hi;
  std::vector<int> count;
  int n_paths = 0;
  int diverged = 0;
};
PathStats path_statistics(const std::vector<std::vector<Vec2>>& paths, double h);

struct NamedModel {
  std::string label;
  const sde::Model* model;
};

struct PathComparison {
  std::vector<std::string> labels;  // "bd" first when BD paths are given
  std::vector<PathStats> stats;
};

/// Integrates n_paths Euler-Maruyama rollouts of every model from x0 with step h
/// and summarizes them alongside the restricted BD paths.
PathComparison compare_paths(const std::vector<NamedModel>& models,
                             const std::vector<std::vector<Vec2>>& bd_latent, int n_paths, const Vec2& x0,
                             double h, int n_steps, double p, std::uint64_t seed);
void write_path_table(const std::string& path, const PathComparison& c);

/// Artifact manifest kept in <out>/manifest.json.
class RunManifest {
 public:
  explicit RunManifest(std::string out_dir);
  void begin(const std::string& stage, const PipelineConfig& cfg);
  void input(const std::string& rel_path);
  void output(const std::string& rel_path);
  void finish();
  std::string path() const { return out_ + "/manifest.json"; }

 private:
  std::string out_;
  std::string stage_;
  std::string started_;
  std::vector<std::string> inputs_, outputs_;
  std::string config_hash_;
  std::uint64_t seed_ = 0;
};

/// Stage names in execution order.
const std::vector<std::string>& stages();

/// Runs one stage against artifacts under out_dir. Stages read their inputs
/// from earlier stages' outputs and throw DomainError if they are missing.
void run_stage(const std::string& stage, const PipelineConfig& cfg, const std::string& out_dir);

/// Calls run_stage for every stage in order; `progress` receives stage names.
void run_all(const PipelineConfig& cfg, const std::string& out_dir,
             const std::function<void(const std::string&)>& progress = {});

}  // namespace esde::pipeline
