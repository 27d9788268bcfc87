#include "esde/nn_sde.hpp"

#include "esde/hash.hpp"
#include "esde/io.hpp"
#include "esde/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <tuple>
#include <utility>

namespace esde::nn {
namespace {

constexpr double kMinDet = 1e-300;

std::vector<int> with_io(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

struct BatchResult {
  double loss = 0.0;
  MatX d_drift;  // dL/d(drift net output), 2 x B
  MatX d_diff;   // dL/d(diff net output), 3 x B
};

// Per-sample NLL terms, optionally with output sensitivities (already divided by B).
BatchResult evaluate_batch(std::span<const sde::SnapshotPair> batch, const MlpSdeModel& model,
                           const MatX& u, const MatX& o, bool want_grad) {
  const auto& nz = model.normalization();
  const auto b = static_cast<Eigen::Index>(batch.size());
  BatchResult r;
  if (want_grad) {
    r.d_drift.resize(2, b);
    r.d_diff.resize(3, b);
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& s = batch[static_cast<std::size_t>(i)];
    const double h = s.h;
    const Vec2 nu(nz.drift_scale.x() * u(0, i), nz.drift_scale.y() * u(1, i));
    const Vec2 res = s.x1 - s.x0 - h * nu;
    const double l11 = nz.noise_scale.x() * softplus(o(0, i));
    const double l21 = nz.noise_scale.y() * o(1, i);
    const double l22 = nz.noise_scale.y() * softplus(o(2, i));
    const double det = h * h * l11 * l11 * l22 * l22;
    if (!(det > kMinDet))
      throw NumericalError("nll_loss: singular covariance (det = " + io::fmt(det) + ")");
    const double y1 = res.x() / l11;
    const double y2 = (res.y() - l21 * y1) / l22;
    total += 0.5 * std::log(det) + 0.5 * (y1 * y1 + y2 * y2) / h;
    if (!want_grad) continue;
    // d/dr of the quadratic form is L^-T y / h; r depends on nu through -h.
    const double g2 = y2 / l22;
    const double g1 = (y1 - l21 * g2) / l11;
    r.d_drift(0, i) = -g1 * nz.drift_scale.x() * inv_b;
    r.d_drift(1, i) = -g2 * nz.drift_scale.y() * inv_b;
    const double dl11 = 1.0 / l11 + (-y1 * y1 / l11 + y2 * l21 * y1 / (l11 * l22)) / h;
    const double dl21 = -y2 * y1 / (l22 * h);
    const double dl22 = 1.0 / l22 - y2 * y2 / (l22 * h);
    r.d_diff(0, i) = dl11 * nz.noise_scale.x() * sigmoid(o(0, i)) * inv_b;
    r.d_diff(1, i) = dl21 * nz.noise_scale.y() * inv_b;
    r.d_diff(2, i) = dl22 * nz.noise_scale.y() * sigmoid(o(2, i)) * inv_b;
  }
  r.loss = total * inv_b;
  return r;
}

double mean_loss(std::span<const sde::SnapshotPair> data, const MlpSdeModel& model) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  return nll_loss(data, model);
}

struct Split {
  std::vector<sde::SnapshotPair> train, validation;
};

Split split(std::span<const sde::SnapshotPair> data, double fraction, Rng& rng) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(data.size())));
  if (data.size() < 2) n_val = 0;
  n_val = std::min(n_val, data.size() - 1);
  Split s;
  for (std::size_t k = 0; k < idx.size(); ++k)
    (k < n_val ? s.validation : s.train).push_back(data[idx[k]]);
  return s;
}

void run_stage(MlpSdeModel& model, const Split& data, const TrainConfig& cfg, int stage, int epochs,
               Rng& rng, std::vector<LossRecord>& curve) {
  if (epochs <= 0) return;
  if (data.train.empty()) throw DomainError("train: stage " + std::to_string(stage) + " has no training data");
  VecX params = model.trainable_parameters();
  Adam opt(static_cast<std::size_t>(params.size()), cfg.learning_rate);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<sde::SnapshotPair> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    if (cfg.cosine_decay)
      opt.set_learning_rate(0.5 * cfg.learning_rate *
                            (1.0 + std::cos(std::numbers::pi * epoch / static_cast<double>(epochs))));
    try {
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        batch.clear();
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        for (std::size_t k = start; k < stop; ++k) batch.push_back(data.train[order[k]]);
        const VecX g = loss_gradient(batch, model);
        if (!g.allFinite()) throw NumericalError("non-finite gradient");
        opt.step(params, g);
        model.set_trainable_parameters(params);
      }
      LossRecord rec{stage, epoch, mean_loss(data.train, model), mean_loss(data.validation, model)};
      if (!std::isfinite(rec.train)) throw NumericalError("non-finite training loss");
      curve.push_back(rec);
    } catch (const std::exception& e) {
      throw NumericalError("training diverged in stage " + std::to_string(stage) + " at epoch " +
                           std::to_string(epoch) + ": " + e.what());
    }
  }
}

nlohmann::json mlp_to_json(const Mlp& m) {
  nlohmann::json j;
  j["sizes"] = m.sizes();
  j["activation"] = to_string(m.hidden_activation());
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.layers()) {
    nlohmann::json lj;
    lj["rows"] = l.weight.rows();
    lj["cols"] = l.weight.cols();
    lj["weight"] = std::vector<double>(l.weight.data(), l.weight.data() + l.weight.size());
    lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(lj);
  }
  j["layers"] = layers;
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  std::vector<Layer> layers;
  for (const auto& lj : j.at("layers")) {
    const auto rows = lj.at("rows").get<Eigen::Index>();
    const auto cols = lj.at("cols").get<Eigen::Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows)
      throw FormatError("mlp archive: layer shape mismatch");
    Layer l;
    l.weight = Eigen::Map<const MatX>(w.data(), rows, cols);
    l.bias = Eigen::Map<const VecX>(b.data(), rows);
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw FormatError("mlp archive: non-finite weight");
    layers.push_back(std::move(l));
  }
  return Mlp::from_layers(std::move(layers), activation_from_string(j.at("activation").get<std::string>()));
}

template <int N>
std::vector<double> to_vec(const Eigen::Matrix<double, N, 1>& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// Two-pass mean and population standard deviation per component; spreads
// below 1e-12 of the magnitude count as constant and get unit scale.
template <typename V>
std::pair<V, V> mean_and_scale(const std::vector<V>& xs) {
  V mean = V::Zero();
  for (const auto& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  V var = V::Zero();
  for (const auto& x : xs) var += (x - mean).cwiseProduct(x - mean);
  var /= static_cast<double>(xs.size());
  V scale = V::Ones();
  for (Eigen::Index c = 0; c < scale.size(); ++c) {
    const double sd = std::sqrt(var(c));
    if (sd > 1e-12 * std::max(1.0, std::abs(mean(c)))) scale(c) = sd;
  }
  return {mean, scale};
}

}  // namespace

Architecture Architecture::parametric() {
  Architecture a;
  a.drift_hidden.assign(5, 26);
  a.diff_hidden.assign(5, 26);
  a.drift_activation = Activation::elu;
  a.diff_activation = Activation::elu;
  return a;
}

MlpSdeModel::MlpSdeModel(const Architecture& arch, const Normalization& norm, std::uint64_t seed)
    : norm_(norm) {
  Rng rng = make_rng(seed, 0x5eed);
  drift_net_ = Mlp(with_io(3, arch.drift_hidden, 2), arch.drift_activation, rng);
  diff_net_ = Mlp(with_io(3, arch.diff_hidden, 3), arch.diff_activation, rng);
}

MlpSdeModel::MlpSdeModel(Mlp drift_net, Mlp diff_net, Normalization norm)
    : drift_net_(std::move(drift_net)), diff_net_(std::move(diff_net)), norm_(norm) {
  if (drift_net_.sizes().front() != 3 || drift_net_.sizes().back() != 2)
    throw DomainError("MlpSdeModel: drift net must map 3 -> 2");
  if (diff_net_.sizes().front() != 3 || diff_net_.sizes().back() != 3)
    throw DomainError("MlpSdeModel: diffusivity net must map 3 -> 3");
}

Eigen::Matrix3Xd MlpSdeModel::encode(std::span<const sde::SnapshotPair> batch) const {
  Eigen::Matrix3Xd z(3, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const Eigen::Vector3d raw(s.x0.x(), s.x0.y(), s.p);
    z.col(static_cast<Eigen::Index>(i)) = (raw - norm_.input_mean).cwiseQuotient(norm_.input_scale);
  }
  return z;
}

MlpSdeModel::Evaluation MlpSdeModel::evaluate(const Vec2& x, double p) const {
  const Eigen::Vector3d raw(x.x(), x.y(), p);
  const MatX z = (raw - norm_.input_mean).cwiseQuotient(norm_.input_scale);
  const MatX u = drift_net_.forward(z);
  const MatX o = diff_net_.forward(z);
  Evaluation e;
  e.drift = Vec2(norm_.drift_scale.x() * u(0, 0), norm_.drift_scale.y() * u(1, 0));
  e.sigma.setZero();
  e.sigma(0, 0) = norm_.noise_scale.x() * softplus(o(0, 0));
  e.sigma(1, 0) = norm_.noise_scale.y() * o(1, 0);
  e.sigma(1, 1) = norm_.noise_scale.y() * softplus(o(2, 0));
  return e;
}

Vec2 MlpSdeModel::drift(const Vec2& x, double p) const { return evaluate(x, p).drift; }
Mat2 MlpSdeModel::sigma(const Vec2& x, double p) const { return evaluate(x, p).sigma; }

VecX MlpSdeModel::trainable_parameters() const {
  const VecX a = drift_trainable ? drift_net_.flat() : VecX();
  const VecX b = diff_trainable ? diff_net_.flat() : VecX();
  VecX out(a.size() + b.size());
  out << a, b;
  return out;
}

void MlpSdeModel::set_trainable_parameters(const VecX& v) {
  Eigen::Index off = 0;
  if (drift_trainable) {
    const auto n = static_cast<Eigen::Index>(drift_net_.parameter_count());
    drift_net_.set_flat(v.segment(off, n));
    off += n;
  }
  if (diff_trainable) {
    const auto n = static_cast<Eigen::Index>(diff_net_.parameter_count());
    diff_net_.set_flat(v.segment(off, n));
    off += n;
  }
  if (off != v.size()) throw DomainError("set_trainable_parameters: wrong parameter count");
}

double nll_loss(std::span<const sde::SnapshotPair> batch, const MlpSdeModel& model) {
  if (batch.empty()) throw DomainError("nll_loss: empty batch");
  for (const auto& s : batch) sde::validate(s);
  const auto z = model.encode(batch);
  return evaluate_batch(batch, model, model.drift_net().forward(z), model.diff_net().forward(z), false).loss;
}

VecX loss_gradient(std::span<const sde::SnapshotPair> batch, const MlpSdeModel& model, double* loss) {
  if (batch.empty()) throw DomainError("loss_gradient: empty batch");
  for (const auto& s : batch) sde::validate(s);
  const auto z = model.encode(batch);
  Mlp::Cache cd, cf;
  const MatX u = model.drift_net().forward(z, &cd);
  const MatX o = model.diff_net().forward(z, &cf);
  const BatchResult r = evaluate_batch(batch, model, u, o, true);
  if (loss) *loss = r.loss;
  VecX gd, gf;
  if (model.drift_trainable) {
    auto grads = model.drift_net().zero_like();
    model.drift_net().backward(cd, r.d_drift, grads);
    gd = Mlp::flatten(grads);
  }
  if (model.diff_trainable) {
    auto grads = model.diff_net().zero_like();
    model.diff_net().backward(cf, r.d_diff, grads);
    gf = Mlp::flatten(grads);
  }
  VecX out(gd.size() + gf.size());
  out << gd, gf;
  return out;
}

Adam::Adam(std::size_t n, double learning_rate, double beta1, double beta2, double eps)
    : m_(VecX::Zero(static_cast<Eigen::Index>(n))),
      v_(VecX::Zero(static_cast<Eigen::Index>(n))),
      lr_(learning_rate),
      b1_(beta1),
      b2_(beta2),
      eps_(eps) {}

void Adam::step(VecX& params, const VecX& grad) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void TrainConfig::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0 || drift_refine_epochs < 0)
    throw DomainError("train config: epochs must be >= 0");
  if (batch_size < 1) throw DomainError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0)) throw DomainError("train config: learning_rate must be > 0");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw DomainError("train config: validation_fraction must be in (0, 1)");
}

std::string TrainConfig::hash() const {
  std::ostringstream os;
  os.precision(17);
  os << "drift=";
  for (int s : arch.drift_hidden) os << s << ',';
  os << to_string(arch.drift_activation) << ";diff=";
  for (int s : arch.diff_hidden) os << s << ',';
  os << to_string(arch.diff_activation) << ";e=" << stage1_epochs << ',' << drift_refine_epochs << ','
     << stage2_epochs << ";b=" << batch_size << ";lr=" << learning_rate << (cosine_decay ? "c" : "") << ";seed=" << seed
     << ";z=" << zscore_threshold << ";v=" << validation_fraction;
  return hash_hex(os.str());
}

std::vector<sde::SnapshotPair> remove_outliers(std::span<const sde::SnapshotPair> data, double threshold) {
  if (!(threshold > 0)) return {data.begin(), data.end()};
  std::map<std::pair<double, double>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) groups[{data[i].h, data[i].p}].push_back(i);
  std::vector<char> keep(data.size(), 1);
  for (const auto& [key, idx] : groups) {
    if (idx.size() < 3) continue;
    Vec2 mean = Vec2::Zero();
    for (auto i : idx) mean += data[i].x1 - data[i].x0;
    mean /= static_cast<double>(idx.size());
    Vec2 var = Vec2::Zero();
    for (auto i : idx) {
      const Vec2 d = data[i].x1 - data[i].x0 - mean;
      var += d.cwiseProduct(d);
    }
    const Vec2 sd = (var / static_cast<double>(idx.size() - 1)).cwiseSqrt();
    for (auto i : idx) {
      const Vec2 d = data[i].x1 - data[i].x0 - mean;
      for (int c = 0; c < 2; ++c) {
        if (sd(c) > 0 && std::abs(d(c)) / sd(c) > threshold) keep[i] = 0;
      }
    }
  }
  std::vector<sde::SnapshotPair> out;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (keep[i]) out.push_back(data[i]);
  return out;
}

Normalization fit_normalization(std::span<const sde::SnapshotPair> drift_data,
                                std::span<const sde::SnapshotPair> diff_data) {
  if (drift_data.empty() || diff_data.empty()) throw DomainError("fit_normalization: empty data");
  std::vector<Eigen::Vector3d> inputs;
  std::vector<Vec2> rates, steps;
  for (const auto& s : drift_data) {
    inputs.emplace_back(s.x0.x(), s.x0.y(), s.p);
    rates.push_back((s.x1 - s.x0) / s.h);
  }
  for (const auto& s : diff_data) steps.push_back((s.x1 - s.x0) / std::sqrt(s.h));
  Normalization n;
  std::tie(n.input_mean, n.input_scale) = mean_and_scale(inputs);
  n.drift_scale = mean_and_scale(rates).second;
  n.noise_scale = mean_and_scale(steps).second;
  return n;
}

TrainResult train_two_stage(std::span<const sde::SnapshotPair> drift_data,
                            std::span<const sde::SnapshotPair> diff_data, const TrainConfig& cfg) {
  cfg.validate();
  if (drift_data.empty() || diff_data.empty()) throw DomainError("train_two_stage: empty snapshot set");
  for (const auto& s : drift_data) sde::validate(s);
  for (const auto& s : diff_data) sde::validate(s);
  TrainResult result;
  const auto drift_clean = remove_outliers(drift_data, cfg.zscore_threshold);
  const auto diff_clean = remove_outliers(diff_data, cfg.zscore_threshold);
  result.removed_outliers = (drift_data.size() - drift_clean.size()) + (diff_data.size() - diff_clean.size());
  if (drift_clean.empty() || diff_clean.empty()) throw DomainError("train_two_stage: no data left after outlier removal");

  Rng split_rng = make_rng(cfg.seed, 1);
  const Split drift_split = split(drift_clean, cfg.validation_fraction, split_rng);
  const Split diff_split = split(diff_clean, cfg.validation_fraction, split_rng);

  result.model = MlpSdeModel(cfg.arch, fit_normalization(drift_split.train, diff_split.train), cfg.seed);
  Rng order_rng = make_rng(cfg.seed, 2);

  auto& m = result.model;
  m.drift_trainable = m.diff_trainable = true;
  run_stage(m, drift_split, cfg, 1, cfg.stage1_epochs, order_rng, result.curve);
  m.drift_trainable = true;
  m.diff_trainable = false;
  run_stage(m, drift_split, cfg, 2, cfg.drift_refine_epochs, order_rng, result.curve);
  m.drift_trainable = false;
  m.diff_trainable = true;
  run_stage(m, diff_split, cfg, 3, cfg.stage2_epochs, order_rng, result.curve);
  m.drift_trainable = m.diff_trainable = true;
  return result;
}

DiffusivitySummary summarize_sigma(const Mat2& sigma) {
  const Mat2 d = sigma * sigma.transpose();
  return {std::sqrt(d(0, 0)), std::sqrt(d(1, 1)), d(0, 1)};
}

std::vector<Vec2> GridSpec2::nodes() const {
  if (nx < 1 || ny < 1) throw DomainError("grid: need at least one node per axis");
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(nx * ny));
  for (int j = 0; j < ny; ++j) {
    const double y = ny == 1 ? 0.5 * (ymin + ymax) : ymin + (ymax - ymin) * j / (ny - 1);
    for (int i = 0; i < nx; ++i) {
      const double x = nx == 1 ? 0.5 * (xmin + xmax) : xmin + (xmax - xmin) * i / (nx - 1);
      out.emplace_back(x, y);
    }
  }
  return out;
}

GridSpec2 GridSpec2::bounding(std::span<const Vec2> pts, int nx, int ny) {
  if (pts.empty()) throw DomainError("grid: no points");
  GridSpec2 g{pts[0].x(), pts[0].x(), pts[0].y(), pts[0].y(), nx, ny};
  for (const auto& p : pts) {
    g.xmin = std::min(g.xmin, p.x());
    g.xmax = std::max(g.xmax, p.x());
    g.ymin = std::min(g.ymin, p.y());
    g.ymax = std::max(g.ymax, p.y());
  }
  return g;
}

namespace {

EnsembleStats stats_at(const std::vector<const MlpSdeModel*>& members, std::vector<Vec2> points, double p) {
  EnsembleStats st;
  st.points = std::move(points);
  st.p = p;
  const auto n = static_cast<Eigen::Index>(st.points.size());
  std::vector<MatX> rows;
  for (const auto* m : members) {
    MatX v(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto e = m->evaluate(st.points[static_cast<std::size_t>(i)], p);
      const auto s = summarize_sigma(e.sigma);
      v.row(i) << e.drift.x(), e.drift.y(), s.s11, s.s22, s.d12;
    }
    rows.push_back(std::move(v));
  }
  const double k = static_cast<double>(members.size());
  st.mean = MatX::Zero(n, 5);
  for (const auto& v : rows) st.mean += v;
  st.mean /= k;
  // Two-pass sample standard deviation.
  MatX sq = MatX::Zero(n, 5);
  for (const auto& v : rows) sq += (v - st.mean).cwiseAbs2();
  st.stddev = (sq / std::max(1.0, k - 1.0)).cwiseSqrt();
  return st;
}

}  // namespace

EnsembleResult ensemble_uq(std::span<const sde::SnapshotPair> drift_data,
                           std::span<const sde::SnapshotPair> diff_data, const TrainConfig& cfg,
                           int n_models, double p, bool vary_seed) {
  if (n_models < 2) throw DomainError("ensemble_uq: need n_models >= 2");
  EnsembleResult r;
  r.n_requested = n_models;
  std::vector<std::optional<MlpSdeModel>> fitted(static_cast<std::size_t>(n_models));
  std::vector<char> failed(static_cast<std::size_t>(n_models), 0);
  parallel_for(n_models, [&](long long i) {
    TrainConfig c = cfg;
    if (vary_seed) c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i));
    try {
      fitted[static_cast<std::size_t>(i)] = train_two_stage(drift_data, diff_data, c).model;
    } catch (const NumericalError&) {
      failed[static_cast<std::size_t>(i)] = 1;
    }
  });
  std::vector<const MlpSdeModel*> ok;
  for (int i = 0; i < n_models; ++i) {
    if (failed[static_cast<std::size_t>(i)]) {
      r.diverged.push_back(i);
    } else {
      r.members.push_back(std::move(*fitted[static_cast<std::size_t>(i)]));
    }
  }
  if (r.members.size() < 2) throw NumericalError("ensemble_uq: fewer than two members converged");
  for (const auto& m : r.members) ok.push_back(&m);
  std::vector<Vec2> pts;
  for (const auto& s : drift_data) pts.push_back(s.x0);
  const auto grid = GridSpec2::bounding(pts, 20, 20);
  r.on_data = stats_at(ok, pts, p);
  r.on_grid = stats_at(ok, grid.nodes(), p);
  return r;
}

Comparison compare_models(const sde::Model& a, const sde::Model& b, const GridSpec2& grid, double p) {
  Comparison c;
  c.grid = grid;
  const auto nodes = grid.nodes();
  c.per_node.resize(static_cast<Eigen::Index>(nodes.size()), 4);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Vec2 da = a.drift(nodes[i], p), db = b.drift(nodes[i], p);
    const auto sa = summarize_sigma(a.sigma(nodes[i], p));
    const auto sb = summarize_sigma(b.sigma(nodes[i], p));
    c.per_node.row(static_cast<Eigen::Index>(i)) << std::abs(da.x() - db.x()), std::abs(da.y() - db.y()),
        std::abs(sa.s11 - sb.s11), std::abs(sa.s22 - sb.s22);
  }
  c.means = c.per_node.colwise().mean().transpose();
  return c;
}

void save_model(const std::string& path, const MlpSdeModel& m, const TrainConfig& cfg) {
  nlohmann::json j;
  j["format"] = "esde-mlp";
  j["version"] = 1;
  j["drift_net"] = mlp_to_json(m.drift_net());
  j["diff_net"] = mlp_to_json(m.diff_net());
  const auto& n = m.normalization();
  j["normalization"] = {{"input_mean", to_vec<3>(n.input_mean)},
                        {"input_scale", to_vec<3>(n.input_scale)},
                        {"drift_scale", to_vec<2>(n.drift_scale)},
                        {"noise_scale", to_vec<2>(n.noise_scale)}};
  j["manifest"] = {{"seed", cfg.seed},
                   {"config_hash", cfg.hash()},
                   {"stage1_epochs", cfg.stage1_epochs},
                   {"drift_refine_epochs", cfg.drift_refine_epochs},
                   {"stage2_epochs", cfg.stage2_epochs},
                   {"batch_size", cfg.batch_size},
                   {"learning_rate", cfg.learning_rate},
                   {"cosine_decay", cfg.cosine_decay}};
  io::write_file(path, j.dump(1) + "\n");
}

MlpSdeModel load_model(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    if (j.value("format", "") != "esde-mlp") throw FormatError(path + ": not an MLP archive");
    if (j.value("version", 0) != 1) throw FormatError(path + ": unsupported archive version");
    Normalization n;
    const auto& nj = j.at("normalization");
    auto get = [&](const char* key, auto& dst) {
      const auto v = nj.at(key).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != dst.size()) throw FormatError(path + ": bad normalization");
      for (std::size_t k = 0; k < v.size(); ++k) dst(static_cast<Eigen::Index>(k)) = v[k];
    };
    get("input_mean", n.input_mean);
    get("input_scale", n.input_scale);
    get("drift_scale", n.drift_scale);
    get("noise_scale", n.noise_scale);
    return MlpSdeModel(mlp_from_json(j.at("drift_net")), mlp_from_json(j.at("diff_net")), n);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_curve(const std::string& path, const std::vector<LossRecord>& curve) {
  io::Table t;
  t.columns = {"stage", "epoch", "train_loss", "validation_loss"};
  for (const auto& r : curve)
    t.add_row({static_cast<double>(r.stage), static_cast<double>(r.epoch), r.train, r.validation});
  io::write_table(path, t);
}

}  // namespace esde::nn
