#pragma once

#include "esde/mlp.hpp"
#include "esde/sde_model.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace esde::nn {

/// Affine maps between latent/parameter space and network units.
struct Normalization {
  Eigen::Vector3d input_mean = Eigen::Vector3d::Zero();  // (phi1, phi2, p)
  Eigen::Vector3d input_scale = Eigen::Vector3d::Ones();
  Vec2 drift_scale = Vec2::Ones();
  Vec2 noise_scale = Vec2::Ones();
};

struct Architecture {
  std::vector<int> drift_hidden{25, 25, 25, 25};
  Activation drift_activation = Activation::relu;
  std::vector<int> diff_hidden{25, 25, 25, 25};
  Activation diff_activation = Activation::softplus;

  /// 5 x 26 ELU layers for both networks (parameter-dependent model).
  static Architecture parametric();
};

/// Drift network (phi1, phi2, p) -> nu, and diffusivity network
/// (phi1, phi2, p) -> lower-triangular L with softplus diagonal. The noise
/// factor is sigma = diag(noise_scale) L, so Sigma = h sigma sigma^T is SPD.
class MlpSdeModel final : public sde::Model {
 public:
  MlpSdeModel() = default;
  MlpSdeModel(const Architecture& arch, const Normalization& norm, std::uint64_t seed);
  MlpSdeModel(Mlp drift_net, Mlp diff_net, Normalization norm);

  Vec2 drift(const Vec2& x, double p) const override;
  Mat2 sigma(const Vec2& x, double p) const override;

  struct Evaluation {
    Vec2 drift;
    Mat2 sigma;
  };
  Evaluation evaluate(const Vec2& x, double p) const;

  Mlp& drift_net() { return drift_net_; }
  Mlp& diff_net() { return diff_net_; }
  const Mlp& drift_net() const { return drift_net_; }
  const Mlp& diff_net() const { return diff_net_; }
  const Normalization& normalization() const { return norm_; }

  bool drift_trainable = true;
  bool diff_trainable = true;

  /// Trainable parameters: drift net first (if trainable), then diffusivity net.
  VecX trainable_parameters() const;
  void set_trainable_parameters(const VecX& v);

  Eigen::Matrix3Xd encode(std::span<const sde::SnapshotPair> batch) const;

 private:
  Mlp drift_net_, diff_net_;
  Normalization norm_;
};

/// Gaussian negative log-likelihood without the constant: mean over the batch of
/// 1/2 log|det Sigma| + 1/2 r^T Sigma^-1 r, with
/// r = x1 - x0 - h nu(x0, p), Sigma = h sigma sigma^T.
double nll_loss(std::span<const sde::SnapshotPair> batch, const MlpSdeModel& model);

/// Exact gradient of nll_loss over the trainable parameters (frozen nets excluded).
VecX loss_gradient(std::span<const sde::SnapshotPair> batch, const MlpSdeModel& model,
                   double* loss = nullptr);

/// Adaptive-moment first-order optimizer.
class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(VecX& params, const VecX& grad);
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  VecX m_, v_;
  double lr_, b1_, b2_, eps_;
  long long t_ = 0;
};

struct TrainConfig {
  Architecture arch;
  int stage1_epochs = 200;        // both nets on drift-step data
  int drift_refine_epochs = 0;    // diffusivity frozen, drift-step data
  int stage2_epochs = 1000;       // drift frozen, diffusivity-step data
  int batch_size = 32;
  double learning_rate = 1e-3;
  bool cosine_decay = true;       // learning rate follows a half cosine to zero within each stage
  std::uint64_t seed = 0;
  double zscore_threshold = 3.0;  // <= 0 disables outlier removal
  double validation_fraction = 0.1;

  void validate() const;
  std::string hash() const;
};

struct LossRecord {
  int stage = 0;
  int epoch = 0;
  double train = 0.0;
  double validation = 0.0;
};

struct TrainResult {
  MlpSdeModel model;
  std::vector<LossRecord> curve;
  std::size_t removed_outliers = 0;
};

/// Drops pairs whose per-dimension displacement z-score exceeds `threshold`,
/// computed within groups of equal (h, p).
std::vector<sde::SnapshotPair> remove_outliers(std::span<const sde::SnapshotPair> data, double threshold);

Normalization fit_normalization(std::span<const sde::SnapshotPair> drift_data,
                                std::span<const sde::SnapshotPair> diff_data);

/// Stage 1: both nets on drift_data. Optional refinement with the diffusivity
/// net frozen. Stage 2: drift net frozen, diffusivity net on diff_data.
/// Throws NumericalError naming the stage and epoch if the loss diverges.
TrainResult train_two_stage(std::span<const sde::SnapshotPair> drift_data,
                            std::span<const sde::SnapshotPair> diff_data, const TrainConfig& cfg);

/// Summary of a noise factor: sqrt of the diagonal of sigma sigma^T and the off-diagonal.
struct DiffusivitySummary {
  double s11, s22, d12;
};
DiffusivitySummary summarize_sigma(const Mat2& sigma);

struct EnsembleStats {
  std::vector<Vec2> points;
  double p = 0.0;
  // Columns: nu1, nu2, sigma11, sigma22, d12.
  MatX mean;
  MatX stddev;
};

struct EnsembleResult {
  int n_requested = 0;
  std::vector<int> diverged;  // member indices excluded from the statistics
  EnsembleStats on_data;
  EnsembleStats on_grid;      // 20 x 20 grid over the data bounding box
  std::vector<MlpSdeModel> members;
};

struct GridSpec2 {
  double xmin, xmax, ymin, ymax;
  int nx = 20, ny = 20;
  std::vector<Vec2> nodes() const;  // x fastest
  static GridSpec2 bounding(std::span<const Vec2> pts, int nx = 20, int ny = 20);
};

/// n_models independent fits with seeds derive_seed(cfg.seed, i) (or cfg.seed
/// for all when vary_seed is false); statistics at parameter p.
EnsembleResult ensemble_uq(std::span<const sde::SnapshotPair> drift_data,
                           std::span<const sde::SnapshotPair> diff_data, const TrainConfig& cfg,
                           int n_models, double p, bool vary_seed = true);

struct Comparison {
  GridSpec2 grid;
  MatX per_node;  // columns: |nu1 - nu1*|, |nu2 - nu2*|, |s11 - s11*|, |s22 - s22*|
  Eigen::Vector4d means;
};

Comparison compare_models(const sde::Model& a, const sde::Model& b, const GridSpec2& grid, double p);

void save_model(const std::string& path, const MlpSdeModel& m, const TrainConfig& cfg);
MlpSdeModel load_model(const std::string& path);
void write_curve(const std::string& path, const std::vector<LossRecord>& curve);

}  // namespace esde::nn
