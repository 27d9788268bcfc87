#include "esde/pipeline.hpp"

#include "esde/featurize.hpp"
#include "esde/free_energy.hpp"
#include "esde/hash.hpp"
#include "esde/io.hpp"
#include "esde/kramers_moyal.hpp"
#include "esde/parallel.hpp"
#include "esde/svg.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <set>

namespace esde::pipeline {
namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams per stage.
enum Stream : std::uint64_t {
  kInit = 1000,
  kSimulate = 2000,
  kKm = 3000,
  kDiff = 4000,
  kCompare = 5000,
  kRollout = 6000,
  kExternal = 7000,
};

// ---------------------------------------------------------------- config

nn::TrainConfig train_from(const KeyValueConfig& c, const std::string& pre, nn::TrainConfig t) {
  t.arch.drift_hidden = c.get_ints(pre + "drift_hidden", t.arch.drift_hidden);
  t.arch.diff_hidden = c.get_ints(pre + "diff_hidden", t.arch.diff_hidden);
  t.arch.drift_activation = nn::activation_from_string(
      c.get_string(pre + "drift_activation", nn::to_string(t.arch.drift_activation)));
  t.arch.diff_activation = nn::activation_from_string(
      c.get_string(pre + "diff_activation", nn::to_string(t.arch.diff_activation)));
  t.stage1_epochs = static_cast<int>(c.get_int(pre + "stage1_epochs", t.stage1_epochs));
  t.drift_refine_epochs = static_cast<int>(c.get_int(pre + "refine_epochs", t.drift_refine_epochs));
  t.stage2_epochs = static_cast<int>(c.get_int(pre + "stage2_epochs", t.stage2_epochs));
  t.batch_size = static_cast<int>(c.get_int(pre + "batch_size", t.batch_size));
  t.learning_rate = c.get_double(pre + "learning_rate", t.learning_rate);
  t.cosine_decay = c.get_bool(pre + "cosine_decay", t.cosine_decay);
  t.zscore_threshold = c.get_double(pre + "zscore", t.zscore_threshold);
  t.validation_fraction = c.get_double(pre + "validation_fraction", t.validation_fraction);
  return t;
}

std::string list_text(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string list_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + io::fmt(v[i]);
  return s;
}

void put_train(KeyValueConfig& c, const std::string& pre, const nn::TrainConfig& t) {
  c.set(pre + "drift_hidden", list_text(t.arch.drift_hidden));
  c.set(pre + "diff_hidden", list_text(t.arch.diff_hidden));
  c.set(pre + "drift_activation", nn::to_string(t.arch.drift_activation));
  c.set(pre + "diff_activation", nn::to_string(t.arch.diff_activation));
  c.set(pre + "stage1_epochs", std::to_string(t.stage1_epochs));
  c.set(pre + "refine_epochs", std::to_string(t.drift_refine_epochs));
  c.set(pre + "stage2_epochs", std::to_string(t.stage2_epochs));
  c.set(pre + "batch_size", std::to_string(t.batch_size));
  c.set(pre + "learning_rate", io::fmt(t.learning_rate));
  c.set(pre + "cosine_decay", t.cosine_decay ? "true" : "false");
  c.set(pre + "zscore", io::fmt(t.zscore_threshold));
  c.set(pre + "validation_fraction", io::fmt(t.validation_fraction));
}

nn::TrainConfig default_param_train() {
  nn::TrainConfig t;
  t.arch = nn::Architecture::parametric();
  return t;
}

// ---------------------------------------------------------------- paths

std::string join(const std::string& out, const std::string& rel) { return out + "/" + rel; }

std::string index_tag(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

std::string traj_rel(std::size_t id) { return "trajectories/traj_" + index_tag(id) + ".txt"; }
std::string latent_rel(std::size_t id) { return "latent/traj_" + index_tag(id) + ".txt"; }
std::string vtag(std::size_t v) { return "v" + std::to_string(v); }

void require_file(const std::string& out, const std::string& rel, const std::string& stage) {
  if (!std::filesystem::exists(join(out, rel)))
    throw DomainError("missing artifact '" + rel + "'; run stage '" + stage + "' first");
}

// ---------------------------------------------------------------- shared state

struct CorpusRow {
  std::size_t traj;
  std::size_t frame;
  double voltage;
  double rg, psi6, c6;
};

std::vector<CorpusRow> read_rows(const std::string& path) {
  std::vector<CorpusRow> out;
  for (const auto& r : io::read_table(path).rows) {
    if (r.size() != 6) throw FormatError(path + ": expected 6 columns");
    out.push_back({static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1]), r[2], r[3], r[4], r[5]});
  }
  return out;
}

void write_rows(const std::string& path, const std::vector<CorpusRow>& rows) {
  io::Table t;
  t.columns = {"traj", "frame", "voltage", "rg", "psi6", "c6"};
  for (const auto& r : rows)
    t.add_row({static_cast<double>(r.traj), static_cast<double>(r.frame), r.voltage, r.rg, r.psi6, r.c6});
  io::write_table(path, t);
}

std::size_t n_trajectories(const PipelineConfig& cfg) {
  return cfg.voltages.size() * static_cast<std::size_t>(cfg.trajectories_per_voltage);
}

std::size_t voltage_of(const PipelineConfig& cfg, std::size_t traj) {
  return traj / static_cast<std::size_t>(cfg.trajectories_per_voltage);
}

bd::StepOptions step_options(const PipelineConfig& cfg) {
  bd::StepOptions o;
  o.max_drift_step = cfg.max_drift_step;
  return o;
}

double normalized_rg(const Points& x) {
  return order::radius_of_gyration(x) / order::rg_hexagonal_reference(static_cast<int>(x.rows()));
}

class TrajectoryCache {
 public:
  explicit TrajectoryCache(std::string out) : out_(std::move(out)) {}
  const bd::Trajectory& get(std::size_t id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, bd::read_trajectory(join(out_, traj_rel(id)))).first;
    return it->second;
  }
  const Points& frame(std::size_t id, std::size_t frame) {
    const auto& t = get(id);
    if (frame >= t.frames.size()) throw FormatError("trajectory " + std::to_string(id) + ": no frame " + std::to_string(frame));
    return t.frames[frame].positions;
  }

 private:
  std::string out_;
  std::map<std::size_t, bd::Trajectory> cache_;
};

struct Manifold {
  std::unique_ptr<feat::Featurizer> featurizer;
  dmaps::DiffusionMapModel model;
  std::vector<CorpusRow> corpus;  // one per training field
  MatX embedding;
};

feat::Featurizer load_featurizer(const PipelineConfig& cfg, const std::string& out) {
  require_file(out, "features/reference.txt", "featurize");
  const auto t = io::read_table(join(out, "features/reference.txt"));
  Points ref(static_cast<Eigen::Index>(t.rows.size()), 2);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != 2) throw FormatError("features/reference.txt: expected 2 columns");
    ref(static_cast<Eigen::Index>(i), 0) = t.rows[i][0];
    ref(static_cast<Eigen::Index>(i), 1) = t.rows[i][1];
  }
  return feat::Featurizer::from_reference(ref, cfg.grid_size, cfg.grid_dilation);
}

Manifold load_manifold(const PipelineConfig& cfg, const std::string& out) {
  require_file(out, "dmaps/model.json", "dmaps");
  Manifold m;
  m.featurizer = std::make_unique<feat::Featurizer>(load_featurizer(cfg, out));
  const auto set = feat::read_density_set(join(out, "features/densities.txt"));
  m.model = dmaps::load_model(join(out, "dmaps/model.json"), set.values);
  m.corpus = read_rows(join(out, "features/corpus.txt"));
  if (m.corpus.size() != static_cast<std::size_t>(m.model.size()))
    throw FormatError("features/corpus.txt does not match the density set");
  m.embedding = m.model.embedding();
  return m;
}

/// Latent coordinates of configurations; NaN where the density leaves the grid.
std::vector<Vec2> restrict_all(const feat::Featurizer& f, const dmaps::DiffusionMapModel& model,
                               const std::vector<const Points*>& configs) {
  const auto n = static_cast<Eigen::Index>(configs.size());
  const auto g2 = static_cast<Eigen::Index>(f.grid().size) * f.grid().size;
  MatX fields(n, g2);
  std::vector<char> ok(configs.size(), 0);
  parallel_for(n, [&](long long i) {
    try {
      fields.row(i) = f.featurize(*configs[static_cast<std::size_t>(i)]).values.transpose();
      ok[static_cast<std::size_t>(i)] = 1;
    } catch (const DomainError&) {
      fields.row(i).setZero();
    }
  });
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (ok[static_cast<std::size_t>(i)]) keep.push_back(i);
  std::vector<Vec2> out(configs.size(), Vec2(kNaN, kNaN));
  if (keep.empty()) return out;
  MatX sub(static_cast<Eigen::Index>(keep.size()), g2);
  for (std::size_t k = 0; k < keep.size(); ++k) sub.row(static_cast<Eigen::Index>(k)) = fields.row(keep[k]);
  const MatX z = dmaps::nystrom_restrict_batch(model, sub);
  for (std::size_t k = 0; k < keep.size(); ++k)
    out[static_cast<std::size_t>(keep[k])] = Vec2(z(static_cast<Eigen::Index>(k), 0), z(static_cast<Eigen::Index>(k), 1));
  return out;
}

std::vector<std::size_t> evenly(const std::vector<std::size_t>& idx, int k) {
  if (k <= 0 || static_cast<std::size_t>(k) >= idx.size()) return idx;
  std::vector<std::size_t> out;
  for (int i = 0; i < k; ++i) out.push_back(idx[static_cast<std::size_t>(i) * idx.size() / static_cast<std::size_t>(k)]);
  return out;
}

std::vector<std::size_t> rows_at_voltage(const std::vector<CorpusRow>& rows, double v) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].voltage == v) out.push_back(i);
  return out;
}

// Snapshot pair tables: x0_1 x0_2 x1_1 x1_2 h p.
void write_pairs(const std::string& path, const std::vector<sde::SnapshotPair>& pairs) {
  io::Table t;
  t.columns = {"x0_1", "x0_2", "x1_1", "x1_2", "h", "p"};
  for (const auto& s : pairs) t.add_row({s.x0.x(), s.x0.y(), s.x1.x(), s.x1.y(), s.h, s.p});
  io::write_table(path, t);
}

std::vector<sde::SnapshotPair> read_pairs(const std::string& path) {
  std::vector<sde::SnapshotPair> out;
  for (const auto& r : io::read_table(path).rows) {
    if (r.size() != 6) throw FormatError(path + ": expected 6 columns");
    sde::SnapshotPair s;
    s.x0 = Vec2(r[0], r[1]);
    s.x1 = Vec2(r[2], r[3]);
    s.h = r[4];
    s.p = r[5];
    out.push_back(s);
  }
  return out;
}

struct LatentPath {
  std::vector<double> t;
  std::vector<Vec2> x;
  std::vector<char> valid;
};

LatentPath read_latent(const std::string& path) {
  LatentPath lp;
  for (const auto& r : io::read_table(path).rows) {
    if (r.size() != 6) throw FormatError(path + ": expected 6 columns");
    lp.t.push_back(r[1]);
    lp.x.emplace_back(r[2], r[3]);
    lp.valid.push_back(r[4] != 0.0);
  }
  return lp;
}

nn::GridSpec2 latent_grid(const MatX& emb) {
  std::vector<Vec2> pts;
  for (Eigen::Index i = 0; i < emb.rows(); ++i) pts.emplace_back(emb(i, 0), emb(i, 1));
  return nn::GridSpec2::bounding(pts, 20, 20);
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- stages

void stage_simulate(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const std::size_t n = n_trajectories(cfg);
  const double horizon = cfg.frames * cfg.save_interval;
  io::Table index;
  index.columns = {"traj", "voltage_index", "voltage", "init_radius"};
  std::vector<double> radii(n);
  parallel_for(static_cast<long long>(n), [&](long long i) {
    const auto id = static_cast<std::size_t>(i);
    const std::size_t v = voltage_of(cfg, id);
    Rng rng = make_rng(cfg.seed, kInit + id);
    const double radius = std::uniform_real_distribution<double>(cfg.init_radius_min, cfg.init_radius_max)(rng);
    radii[id] = radius;
    const auto c0 = bd::random_initial(cfg.physics.n_particles, radius, 2.2, derive_seed(cfg.seed, kInit + id));
    const auto p = cfg.physics_at(cfg.voltages[v]);
    const auto tr = bd::simulate(c0, horizon, cfg.dt, cfg.save_interval, derive_seed(cfg.seed, kSimulate + id), p,
                                 step_options(cfg));
    bd::write_trajectory(join(out, traj_rel(id)), tr);
  });
  for (std::size_t id = 0; id < n; ++id) {
    const std::size_t v = voltage_of(cfg, id);
    index.add_row({static_cast<double>(id), static_cast<double>(v), cfg.voltages[v], radii[id]});
    mf.output(traj_rel(id));
  }
  io::write_table(join(out, "trajectories/index.txt"), index);
  mf.output("trajectories/index.txt");
}

void stage_order(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const std::size_t n = n_trajectories(cfg);
  std::vector<std::vector<CorpusRow>> per(n);
  parallel_for(static_cast<long long>(n), [&](long long i) {
    const auto id = static_cast<std::size_t>(i);
    const auto tr = bd::read_trajectory(join(out, traj_rel(id)));
    const double v = cfg.voltages[voltage_of(cfg, id)];
    for (std::size_t k = 0; k < tr.frames.size(); ++k) {
      const auto& x = tr.frames[k].positions;
      const auto o = order::compute(x, cfg.order);
      per[id].push_back({id, k, v, normalized_rg(x), o.psi6, o.c6});
    }
  });
  for (std::size_t id = 0; id < n; ++id) mf.input(traj_rel(id));
  std::vector<CorpusRow> all;
  for (auto& p : per) all.insert(all.end(), p.begin(), p.end());
  write_rows(join(out, "order/frames.txt"), all);
  mf.output("order/frames.txt");

  std::vector<CorpusRow> kept;
  for (const auto& r : all)
    if (r.rg <= cfg.rg_threshold) kept.push_back(r);
  if (kept.empty())
    throw DomainError("sample_dataset: empty corpus after discarding frames with Rg above " + io::fmt(cfg.rg_threshold));
  std::vector<double> rg, psi;
  for (const auto& r : kept) rg.push_back(r.rg), psi.push_back(r.psi6);
  int cap = 0;
  const auto sel = subsample_uniform(rg, psi, cfg.histogram_bins, static_cast<std::size_t>(cfg.corpus_target), &cap);
  std::vector<CorpusRow> corpus;
  for (auto i : sel) corpus.push_back(kept[i]);
  write_rows(join(out, "order/corpus.txt"), corpus);
  mf.output("order/corpus.txt");
  io::Table s;
  s.columns = {"frames", "below_threshold", "corpus", "bin_cap"};
  s.add_row({static_cast<double>(all.size()), static_cast<double>(kept.size()), static_cast<double>(corpus.size()),
             static_cast<double>(cap)});
  io::write_table(join(out, "order/summary.txt"), s);
  mf.output("order/summary.txt");
}

void stage_featurize(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  require_file(out, "order/corpus.txt", "order-params");
  mf.input("order/corpus.txt");
  const auto rows = read_rows(join(out, "order/corpus.txt"));
  TrajectoryCache cache(out);
  std::vector<Points> configs;
  for (const auto& r : rows) configs.push_back(cache.frame(r.traj, r.frame));
  const std::size_t ref_idx = feat::select_reference(configs);
  const auto f = feat::Featurizer::from_reference(configs[ref_idx], cfg.grid_size, cfg.grid_dilation);

  const auto g2 = static_cast<Eigen::Index>(cfg.grid_size) * cfg.grid_size;
  MatX fields(static_cast<Eigen::Index>(configs.size()), g2);
  std::vector<double> bw(configs.size(), 0.0);
  std::vector<char> ok(configs.size(), 0);
  parallel_for(static_cast<long long>(configs.size()), [&](long long i) {
    try {
      const auto d = f.featurize(configs[static_cast<std::size_t>(i)]);
      fields.row(i) = d.values.transpose();
      bw[static_cast<std::size_t>(i)] = d.bandwidth;
      ok[static_cast<std::size_t>(i)] = 1;
    } catch (const DomainError&) {
    }
  });
  feat::DensitySet set;
  set.grid = f.grid();
  std::vector<CorpusRow> kept;
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!ok[i]) continue;
    keep.push_back(static_cast<Eigen::Index>(i));
    kept.push_back(rows[i]);
    set.ids.push_back(static_cast<long long>(i));
    set.bandwidths.push_back(bw[i]);
  }
  if (keep.size() < 10) throw DomainError("featurize: fewer than 10 corpus frames fit the density grid");
  set.values.resize(static_cast<Eigen::Index>(keep.size()), g2);
  for (std::size_t k = 0; k < keep.size(); ++k) set.values.row(static_cast<Eigen::Index>(k)) = fields.row(keep[k]);

  io::Table ref;
  ref.columns = {"x", "y"};
  for (Eigen::Index i = 0; i < configs[ref_idx].rows(); ++i) ref.add_row({configs[ref_idx](i, 0), configs[ref_idx](i, 1)});
  io::write_table(join(out, "features/reference.txt"), ref,
                  "traj=" + std::to_string(rows[ref_idx].traj) + " frame=" + std::to_string(rows[ref_idx].frame));
  feat::write_density_set(join(out, "features/densities.txt"), set);
  write_rows(join(out, "features/corpus.txt"), kept);
  for (const char* rel : {"features/reference.txt", "features/densities.txt", "features/corpus.txt"}) mf.output(rel);
  for (std::size_t id = 0; id < n_trajectories(cfg); ++id) mf.input(traj_rel(id));
}

void stage_dmaps(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  require_file(out, "features/densities.txt", "featurize");
  mf.input("features/densities.txt");
  const auto set = feat::read_density_set(join(out, "features/densities.txt"));
  const auto model = dmaps::build(set.values, cfg.dmaps);
  dmaps::save_model(join(out, "dmaps/model.json"), model);
  const MatX emb = model.embedding();
  io::Table e;
  e.columns = {"phi1", "phi2"};
  for (Eigen::Index i = 0; i < emb.rows(); ++i) e.add_row({emb(i, 0), emb(i, 1)});
  io::write_table(join(out, "dmaps/embedding.txt"), e);
  io::Table s;
  s.columns = {"index", "eigenvalue", "residual", "selected"};
  for (Eigen::Index k = 0; k < model.eigenvalues.size(); ++k) {
    const bool sel = k == model.selection.indices[0] || k == model.selection.indices[1];
    const double r = static_cast<std::size_t>(k) < model.selection.residuals.size()
                         ? model.selection.residuals[static_cast<std::size_t>(k)]
                         : kNaN;
    s.add_row({static_cast<double>(k), model.eigenvalues(k), r, sel ? 1.0 : 0.0});
  }
  io::write_table(join(out, "dmaps/spectrum.txt"), s, "epsilon=" + io::fmt(model.epsilon));
  for (const char* rel : {"dmaps/model.json", "dmaps/embedding.txt", "dmaps/spectrum.txt"}) mf.output(rel);
}

void stage_restrict(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const auto m = load_manifold(cfg, out);
  for (const char* rel : {"dmaps/model.json", "features/densities.txt", "features/reference.txt"}) mf.input(rel);
  for (std::size_t id = 0; id < n_trajectories(cfg); ++id) {
    const auto tr = bd::read_trajectory(join(out, traj_rel(id)));
    mf.input(traj_rel(id));
    std::vector<const Points*> ptrs;
    for (const auto& f : tr.frames) ptrs.push_back(&f.positions);
    const auto z = restrict_all(*m.featurizer, m.model, ptrs);
    io::Table t;
    t.columns = {"frame", "time", "phi1", "phi2", "valid", "rg"};
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double rg = normalized_rg(tr.frames[k].positions);
      const bool valid = std::isfinite(z[k].x()) && rg <= cfg.rg_threshold;
      t.add_row({static_cast<double>(k), tr.frames[k].time, z[k].x(), z[k].y(), valid ? 1.0 : 0.0, rg});
    }
    io::write_table(join(out, latent_rel(id)), t);
    mf.output(latent_rel(id));
  }
}

// Restricted endpoints of short BD runs from a corpus frame.
std::vector<Vec2> burst_latent(const PipelineConfig& cfg, const Manifold& m, const Points& start, double v_star,
                               int replicas, double h_latent, std::uint64_t seed) {
  bd::Configuration c;
  c.positions = start;
  const auto ends = bd::burst(c, replicas, h_latent * cfg.save_interval, cfg.dt, seed, cfg.physics_at(v_star),
                              step_options(cfg));
  std::vector<const Points*> ptrs;
  for (const auto& e : ends) ptrs.push_back(&e.positions);
  auto z = restrict_all(*m.featurizer, m.model, ptrs);
  std::erase_if(z, [](const Vec2& x) { return !x.allFinite(); });
  return z;
}

void stage_fit_km(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const auto m = load_manifold(cfg, out);
  mf.input("dmaps/model.json");
  const double vp = cfg.voltages[cfg.primary_index()];
  const auto anchors_idx = evenly(rows_at_voltage(m.corpus, vp), cfg.km_anchors);
  if (anchors_idx.empty()) throw DomainError("fit-km: no corpus frames at the primary voltage");
  TrajectoryCache cache(out);
  std::vector<Points> starts;
  std::vector<Vec2> anchors;
  for (auto i : anchors_idx) {
    starts.push_back(cache.frame(m.corpus[i].traj, m.corpus[i].frame));
    anchors.emplace_back(m.embedding(static_cast<Eigen::Index>(i), 0), m.embedding(static_cast<Eigen::Index>(i), 1));
  }
  const auto model = km::km_field(
      anchors,
      [&](std::size_t a, const Vec2&, int n, double h) {
        return burst_latent(cfg, m, starts[a], vp, n, h, derive_seed(cfg.seed, kKm + a));
      },
      cfg.km_replicas, cfg.km_h);
  km::write_model(join(out, "km/model.txt"), model);
  mf.output("km/model.txt");
}

std::vector<sde::SnapshotPair> drift_pairs(const PipelineConfig& cfg, const std::string& out, std::size_t v) {
  const int stride = cfg.drift_stride[v];
  std::vector<sde::SnapshotPair> pairs;
  for (std::size_t id = 0; id < n_trajectories(cfg); ++id) {
    if (voltage_of(cfg, id) != v) continue;
    const auto lp = read_latent(join(out, latent_rel(id)));
    for (std::size_t k = 0; k + static_cast<std::size_t>(stride) < lp.x.size(); ++k) {
      const std::size_t j = k + static_cast<std::size_t>(stride);
      if (!lp.valid[k] || !lp.valid[j]) continue;
      pairs.push_back({lp.x[k], lp.x[j], static_cast<double>(stride), cfg.voltages[v]});
    }
  }
  return pairs;
}

void stage_fit_nn(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const auto m = load_manifold(cfg, out);
  mf.input("dmaps/model.json");
  for (std::size_t id = 0; id < n_trajectories(cfg); ++id) {
    require_file(out, latent_rel(id), "restrict");
    mf.input(latent_rel(id));
  }
  TrajectoryCache cache(out);
  std::vector<sde::SnapshotPair> all_drift, all_diff;
  std::vector<sde::SnapshotPair> primary_drift, primary_diff;
  for (std::size_t v = 0; v < cfg.voltages.size(); ++v) {
    auto dp = drift_pairs(cfg, out, v);
    const auto idx = evenly(rows_at_voltage(m.corpus, cfg.voltages[v]), cfg.diff_anchors);
    std::vector<std::vector<sde::SnapshotPair>> per(idx.size());
    std::vector<Points> starts;
    for (auto i : idx) starts.push_back(cache.frame(m.corpus[i].traj, m.corpus[i].frame));
    for (std::size_t a = 0; a < idx.size(); ++a) {
      const Vec2 x0(m.embedding(static_cast<Eigen::Index>(idx[a]), 0), m.embedding(static_cast<Eigen::Index>(idx[a]), 1));
      const auto ends = burst_latent(cfg, m, starts[a], cfg.voltages[v], cfg.diff_replicas, cfg.h_diff,
                                     derive_seed(cfg.seed, kDiff + 100000 * v + a));
      for (const auto& e : ends) per[a].push_back({x0, e, cfg.h_diff, cfg.voltages[v]});
    }
    std::vector<sde::SnapshotPair> fp;
    for (auto& p : per) fp.insert(fp.end(), p.begin(), p.end());
    if (dp.empty() || fp.empty())
      throw DomainError("fit-nn: no snapshot pairs at voltage " + io::fmt(cfg.voltages[v]));
    write_pairs(join(out, "nn/pairs_drift_" + vtag(v) + ".txt"), dp);
    write_pairs(join(out, "nn/pairs_diff_" + vtag(v) + ".txt"), fp);
    mf.output("nn/pairs_drift_" + vtag(v) + ".txt");
    mf.output("nn/pairs_diff_" + vtag(v) + ".txt");
    if (v == cfg.primary_index()) primary_drift = dp, primary_diff = fp;
    all_drift.insert(all_drift.end(), dp.begin(), dp.end());
    all_diff.insert(all_diff.end(), fp.begin(), fp.end());
  }

  auto tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 11);
  const auto primary = nn::train_two_stage(primary_drift, primary_diff, tc);
  nn::save_model(join(out, "nn/model_primary.json"), primary.model, tc);
  nn::write_curve(join(out, "nn/curve_primary.txt"), primary.curve);

  auto pc = cfg.param_train;
  pc.seed = derive_seed(cfg.seed, 12);
  const auto param = nn::train_two_stage(all_drift, all_diff, pc);
  nn::save_model(join(out, "nn/model_parametric.json"), param.model, pc);
  nn::write_curve(join(out, "nn/curve_parametric.txt"), param.curve);
  for (const char* rel : {"nn/model_primary.json", "nn/curve_primary.txt", "nn/model_parametric.json",
                          "nn/curve_parametric.txt"})
    mf.output(rel);
}

// Restricted BD paths of `frames` saved frames from a fixed start.
std::vector<std::vector<Vec2>> bd_paths(const PipelineConfig& cfg, const Manifold& m, const Points& start,
                                        double v_star, int n, std::uint64_t seed) {
  std::vector<bd::Trajectory> trs(static_cast<std::size_t>(n));
  bd::Configuration c0;
  c0.positions = start;
  const auto p = cfg.physics_at(v_star);
  parallel_for(n, [&](long long i) {
    trs[static_cast<std::size_t>(i)] = bd::simulate(c0, cfg.compare_frames * cfg.save_interval, cfg.dt,
                                                    cfg.save_interval, derive_seed(seed, static_cast<std::uint64_t>(i)),
                                                    p, step_options(cfg));
  });
  std::vector<std::vector<Vec2>> out;
  for (const auto& tr : trs) {
    std::vector<const Points*> ptrs;
    for (const auto& f : tr.frames) ptrs.push_back(&f.positions);
    out.push_back(restrict_all(*m.featurizer, m.model, ptrs));
  }
  return out;
}

std::size_t compare_start(const PipelineConfig& cfg, const Manifold& m) {
  const auto idx = rows_at_voltage(m.corpus, cfg.voltages[cfg.primary_index()]);
  if (idx.empty()) throw DomainError("integrate: no corpus frames at the primary voltage");
  std::size_t best = idx.front();
  for (auto i : idx)
    if (m.corpus[i].rg > m.corpus[best].rg) best = i;
  return best;
}

void write_external_input(const PipelineConfig& cfg, const std::string& path) {
  auto p = cfg.physics_at(cfg.external_voltage);
  p.n_particles = cfg.external_particles;
  const double radius = 0.5 * (cfg.init_radius_min + cfg.init_radius_max);
  const auto c0 = bd::random_initial(cfg.external_particles, radius, 2.2, derive_seed(cfg.seed, kExternal));
  const auto tr = bd::simulate(c0, cfg.compare_frames * cfg.save_interval, cfg.dt, cfg.save_interval,
                               derive_seed(cfg.seed, kExternal + 1), p, step_options(cfg));
  // Plain table in micrometres: time x1 y1 ... xN yN.
  const double um = 1.0 / cfg.external_radius_scale;
  std::string text = "# synthetic recording, positions in um\n";
  for (const auto& f : tr.frames) {
    io::append(text, f.time);
    for (Eigen::Index i = 0; i < f.positions.rows(); ++i) {
      text += ' ';
      io::append(text, f.positions(i, 0) * um);
      text += ' ';
      io::append(text, f.positions(i, 1) * um);
    }
    text += '\n';
  }
  io::write_file(path, text);
}

void stage_integrate(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const auto m = load_manifold(cfg, out);
  require_file(out, "km/model.txt", "fit-km");
  require_file(out, "nn/model_primary.json", "fit-nn");
  for (const char* rel : {"dmaps/model.json", "km/model.txt", "nn/model_primary.json", "nn/model_parametric.json"})
    mf.input(rel);
  const auto km_model = km::read_model(join(out, "km/model.txt"));
  const auto nn_primary = nn::load_model(join(out, "nn/model_primary.json"));
  const auto nn_param = nn::load_model(join(out, "nn/model_parametric.json"));

  TrajectoryCache cache(out);
  const std::size_t s = compare_start(cfg, m);
  const Points& start = cache.frame(m.corpus[s].traj, m.corpus[s].frame);
  const Vec2 x0(m.embedding(static_cast<Eigen::Index>(s), 0), m.embedding(static_cast<Eigen::Index>(s), 1));
  const double vp = cfg.voltages[cfg.primary_index()];

  const auto bd = bd_paths(cfg, m, start, vp, cfg.compare_paths, derive_seed(cfg.seed, kCompare));
  const auto cmp = compare_paths({{"nn", &nn_primary}, {"km", &km_model}}, bd, cfg.compare_paths, x0, 1.0,
                                 cfg.compare_frames, vp, derive_seed(cfg.seed, kRollout));
  write_path_table(join(out, "integrate/paths_primary.txt"), cmp);
  mf.output("integrate/paths_primary.txt");

  for (std::size_t v = 0; v < cfg.voltages.size(); ++v) {
    const auto bdv = bd_paths(cfg, m, start, cfg.voltages[v], cfg.param_compare_paths,
                              derive_seed(cfg.seed, kCompare + 1 + v));
    const auto c = compare_paths({{"nn_param", &nn_param}}, bdv, cfg.param_compare_paths, x0, 1.0,
                                 cfg.compare_frames, cfg.voltages[v], derive_seed(cfg.seed, kRollout + 1 + v));
    const std::string rel = "integrate/paths_param_" + vtag(v) + ".txt";
    write_path_table(join(out, rel), c);
    mf.output(rel);
  }

  // External recording: own minimum-Rg reference, rescaled to the training reference size.
  std::string ext = cfg.external_path;
  if (ext.empty()) {
    ext = join(out, "integrate/external_input.txt");
    write_external_input(cfg, ext);
    mf.output("integrate/external_input.txt");
  }
  const auto frames = feat::ingest_external(ext, cfg.external_radius_scale);
  if (frames.frames.empty()) throw DomainError("restrict_external: no frames in " + ext);
  const Points& ext_ref = frames.frames[frames.reference_index].positions;
  const double scale =
      order::radius_of_gyration(m.featurizer->reference()) / order::radius_of_gyration(ext_ref);
  std::vector<Points> scaled;
  for (const auto& f : frames.frames) scaled.push_back(f.positions * scale);
  const feat::Featurizer ef(scaled[frames.reference_index], m.featurizer->grid(), "external");
  std::vector<const Points*> ptrs;
  for (const auto& x : scaled) ptrs.push_back(&x);
  const auto z = restrict_all(ef, m.model, ptrs);
  std::size_t first = 0;
  while (first < z.size() && !z[first].allFinite()) ++first;
  if (first == z.size()) throw DomainError("restrict_external: no frame restricts into the training grid");
  const auto ce = compare_paths({{"nn_param", &nn_param}}, {std::vector<Vec2>(z.begin() + static_cast<long>(first), z.end())},
                                cfg.compare_paths, z[first], 1.0, static_cast<int>(z.size() - first) - 1,
                                cfg.external_voltage, derive_seed(cfg.seed, kRollout + 100));
  write_path_table(join(out, "integrate/external.txt"), ce);
  mf.output("integrate/external.txt");
}

void stage_free_energy(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  require_file(out, "nn/model_parametric.json", "fit-nn");
  require_file(out, "dmaps/embedding.txt", "dmaps");
  mf.input("nn/model_parametric.json");
  mf.input("nn/model_primary.json");
  const auto emb_t = io::read_table(join(out, "dmaps/embedding.txt"));
  MatX emb(static_cast<Eigen::Index>(emb_t.rows.size()), 2);
  for (std::size_t i = 0; i < emb_t.rows.size(); ++i)
    emb.row(static_cast<Eigen::Index>(i)) << emb_t.rows[i][0], emb_t.rows[i][1];
  auto grid = latent_grid(emb);
  grid.xmin = std::min(grid.xmin, 0.0), grid.xmax = std::max(grid.xmax, 0.0);
  grid.ymin = std::min(grid.ymin, 0.0), grid.ymax = std::max(grid.ymax, 0.0);
  const auto param = nn::load_model(join(out, "nn/model_parametric.json"));
  const auto primary = nn::load_model(join(out, "nn/model_primary.json"));
  io::Table diag;
  diag.columns = {"voltage", "parametric", "loop_integral", "loop_magnitude", "divergence_ratio", "max_divergence_ratio"};
  auto run = [&](const sde::Model& model, double v, const std::string& rel, bool parametric) {
    const auto f = fe::effective_potential(model, grid, v);
    fe::write_potential(join(out, rel), f);
    mf.output(rel);
    const auto d = fe::diagnose(model, grid, v);
    diag.add_row({v, parametric ? 1.0 : 0.0, d.loop_integral, d.loop_magnitude, d.divergence_ratio,
                  d.max_divergence_ratio});
  };
  for (std::size_t v = 0; v < cfg.voltages.size(); ++v)
    run(param, cfg.voltages[v], "free_energy/potential_param_" + vtag(v) + ".txt", true);
  run(primary, cfg.voltages[cfg.primary_index()], "free_energy/potential_primary.txt", false);
  io::write_table(join(out, "free_energy/diagnostics.txt"), diag);
  mf.output("free_energy/diagnostics.txt");
}

void stage_compare(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  require_file(out, "km/model.txt", "fit-km");
  require_file(out, "nn/model_primary.json", "fit-nn");
  mf.input("km/model.txt");
  mf.input("nn/model_primary.json");
  const auto km_model = km::read_model(join(out, "km/model.txt"));
  const auto nn_primary = nn::load_model(join(out, "nn/model_primary.json"));
  const auto grid = nn::GridSpec2::bounding(km_model.anchors(), 20, 20);
  const double vp = cfg.voltages[cfg.primary_index()];
  const auto c = nn::compare_models(nn_primary, km_model, grid, vp);
  const auto nodes = grid.nodes();
  io::Table t;
  t.columns = {"phi1", "phi2", "d_nu1", "d_nu2", "d_sigma11", "d_sigma22"};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto r = c.per_node.row(static_cast<Eigen::Index>(i));
    t.add_row({nodes[i].x(), nodes[i].y(), r(0), r(1), r(2), r(3)});
  }
  io::write_table(join(out, "compare/nn_vs_km_grid.txt"), t);
  io::Table s;
  s.columns = {"mean_d_nu1", "mean_d_nu2", "mean_d_sigma11", "mean_d_sigma22"};
  s.add_row({c.means(0), c.means(1), c.means(2), c.means(3)});
  io::write_table(join(out, "compare/summary.txt"), s);
  mf.output("compare/nn_vs_km_grid.txt");
  mf.output("compare/summary.txt");
}

void write_stats(const std::string& path, const nn::EnsembleStats& st) {
  io::Table t;
  t.columns = {"phi1", "phi2", "mean_nu1", "mean_nu2", "mean_sigma11", "mean_sigma22", "mean_d12",
               "std_nu1", "std_nu2", "std_sigma11", "std_sigma22", "std_d12"};
  for (std::size_t i = 0; i < st.points.size(); ++i) {
    std::vector<double> row{st.points[i].x(), st.points[i].y()};
    for (int c = 0; c < 5; ++c) row.push_back(st.mean(static_cast<Eigen::Index>(i), c));
    for (int c = 0; c < 5; ++c) row.push_back(st.stddev(static_cast<Eigen::Index>(i), c));
    t.add_row(row);
  }
  io::write_table(path, t);
}

void stage_uq(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const std::size_t v = cfg.primary_index();
  const std::string drel = "nn/pairs_drift_" + vtag(v) + ".txt", frel = "nn/pairs_diff_" + vtag(v) + ".txt";
  io::Table s;
  s.columns = {"requested", "converged", "diverged"};
  if (cfg.uq_models < 2) {
    s.add_row({static_cast<double>(cfg.uq_models), 0.0, 0.0});
    io::write_table(join(out, "uq/summary.txt"), s, "ensemble disabled (uq_models < 2)");
    mf.output("uq/summary.txt");
    return;
  }
  require_file(out, drel, "fit-nn");
  mf.input(drel);
  mf.input(frel);
  auto tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 13);
  const auto r = nn::ensemble_uq(read_pairs(join(out, drel)), read_pairs(join(out, frel)), tc, cfg.uq_models,
                                 cfg.voltages[v]);
  write_stats(join(out, "uq/on_data.txt"), r.on_data);
  write_stats(join(out, "uq/on_grid.txt"), r.on_grid);
  s.add_row({static_cast<double>(r.n_requested), static_cast<double>(r.members.size()),
             static_cast<double>(r.diverged.size())});
  io::write_table(join(out, "uq/summary.txt"), s);
  for (const char* rel : {"uq/on_data.txt", "uq/on_grid.txt", "uq/summary.txt"}) mf.output(rel);
}

// ---------------------------------------------------------------- report

std::vector<double> column(const io::Table& t, std::size_t c) {
  std::vector<double> v;
  for (const auto& r : t.rows) v.push_back(c < r.size() ? r[c] : kNaN);
  return v;
}

void plot_paths(const std::string& out, const std::string& rel_table, const std::string& stem, const std::string& title) {
  const auto t = io::read_table(join(out, rel_table));
  for (int coord = 0; coord < 2; ++coord) {
    std::vector<svg::Series> series;
    // Columns: time, then per label (phi1 mean lo hi, phi2 mean lo hi).
    for (std::size_t c = 1; c + 6 <= t.columns.size(); c += 6) {
      const std::string& name = t.columns[c];
      svg::Series s;
      s.label = name.substr(0, name.find("_phi"));
      s.t = column(t, 0);
      s.mean = column(t, c + 3 * static_cast<std::size_t>(coord));
      s.lo = column(t, c + 3 * static_cast<std::size_t>(coord) + 1);
      s.hi = column(t, c + 3 * static_cast<std::size_t>(coord) + 2);
      series.push_back(std::move(s));
    }
    const std::string phi = coord == 0 ? "phi1" : "phi2";
    svg::lines(join(out, "report/" + stem + "_" + phi + ".svg"), {title, "t (frames)", phi}, series);
  }
}

void stage_report(const PipelineConfig& cfg, const std::string& out, RunManifest& mf) {
  const auto m = load_manifold(cfg, out);
  for (const char* rel : {"km/model.txt", "nn/model_primary.json", "nn/model_parametric.json",
                          "integrate/paths_primary.txt", "integrate/external.txt", "free_energy/diagnostics.txt",
                          "compare/summary.txt"}) {
    require_file(out, rel, "all");
    mf.input(rel);
  }
  const auto km_model = km::read_model(join(out, "km/model.txt"));
  const auto nn_primary = nn::load_model(join(out, "nn/model_primary.json"));
  const auto nn_param = nn::load_model(join(out, "nn/model_parametric.json"));
  const double vp = cfg.voltages[cfg.primary_index()];
  auto emit = [&](const std::string& rel, const io::Table& t) {
    io::write_table(join(out, rel), t);
    mf.output(rel);
  };
  auto svg_out = [&](const std::string& rel) { mf.output(rel); return join(out, rel); };

  // Fig. 3: embedding colored by order parameters.
  io::Table f3;
  f3.columns = {"phi1", "phi2", "rg", "psi6", "c6", "voltage"};
  for (std::size_t i = 0; i < m.corpus.size(); ++i) {
    const auto& r = m.corpus[i];
    f3.add_row({m.embedding(static_cast<Eigen::Index>(i), 0), m.embedding(static_cast<Eigen::Index>(i), 1), r.rg, r.psi6,
                r.c6, r.voltage});
  }
  emit("report/fig3_embedding.txt", f3);
  const auto x3 = column(f3, 0), y3 = column(f3, 1);
  svg::scatter(svg_out("report/fig3_rg.svg"), {"Embedding colored by Rg", "phi1", "phi2"}, x3, y3, column(f3, 2));
  svg::scatter(svg_out("report/fig3_psi6.svg"), {"Embedding colored by psi6", "phi1", "phi2"}, x3, y3, column(f3, 3));
  svg::scatter(svg_out("report/fig3_c6.svg"), {"Embedding colored by C6", "phi1", "phi2"}, x3, y3, column(f3, 4));

  // Figs. 4, 5: coefficients on a subsampled set.
  std::vector<std::size_t> all(m.corpus.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto sub = evenly(rows_at_voltage(m.corpus, vp).empty() ? all : rows_at_voltage(m.corpus, vp), 400);
  io::Table f4, f5;
  f4.columns = {"phi1", "phi2", "nu1", "nu2", "nu1_km", "nu2_km"};
  f5.columns = {"phi1", "phi2", "sigma11", "sigma22", "sigma12", "sigma11_km", "sigma22_km"};
  for (auto i : sub) {
    const Vec2 x(m.embedding(static_cast<Eigen::Index>(i), 0), m.embedding(static_cast<Eigen::Index>(i), 1));
    const auto e = nn_primary.evaluate(x, vp);
    const auto s = nn::summarize_sigma(e.sigma);
    const auto& k = km_model.nn_evaluate(x);
    f4.add_row({x.x(), x.y(), e.drift.x(), e.drift.y(), k.drift.x(), k.drift.y()});
    f5.add_row({x.x(), x.y(), s.s11, s.s22, s.d12, k.sigma.x(), k.sigma.y()});
  }
  emit("report/fig4_drift.txt", f4);
  emit("report/fig5_diffusivity.txt", f5);
  const auto x4 = column(f4, 0), y4 = column(f4, 1);
  svg::quiver(svg_out("report/fig4_drift_nn.svg"), {"Drift (network)", "phi1", "phi2"}, x4, y4, column(f4, 2), column(f4, 3));
  svg::quiver(svg_out("report/fig4_drift_km.svg"), {"Drift (Kramers-Moyal)", "phi1", "phi2"}, x4, y4, column(f4, 4),
              column(f4, 5));
  const char* f5n[] = {"sigma11", "sigma22", "sigma12", "sigma11_km", "sigma22_km"};
  for (std::size_t c = 0; c < 5; ++c)
    svg::scatter(svg_out("report/fig5_" + std::string(f5n[c]) + ".svg"), {f5n[c], "phi1", "phi2"}, x4, y4,
                 column(f5, c + 2));

  // Fig. 6: path envelopes, Fig. 7: parametric model per voltage.
  const auto p6 = io::read_table(join(out, "integrate/paths_primary.txt"));
  emit("report/fig6_paths.txt", p6);
  plot_paths(out, "report/fig6_paths.txt", "fig6_paths", "BD vs eSDE, mean and min-max envelope");
  mf.output("report/fig6_paths_phi1.svg");
  mf.output("report/fig6_paths_phi2.svg");
  for (std::size_t v = 0; v < cfg.voltages.size(); ++v) {
    const std::string rel = "report/fig7_param_paths_" + vtag(v) + ".txt";
    emit(rel, io::read_table(join(out, "integrate/paths_param_" + vtag(v) + ".txt")));
    plot_paths(out, rel, "fig7_param_paths_" + vtag(v), "Parametric eSDE, V* = " + io::fmt(cfg.voltages[v]));
    mf.output("report/fig7_param_paths_" + vtag(v) + "_phi1.svg");
    mf.output("report/fig7_param_paths_" + vtag(v) + "_phi2.svg");
  }

  // Fig. 8: parametric coefficients per voltage.
  io::Table f8;
  f8.columns = {"voltage", "phi1", "phi2", "nu1", "nu2", "sigma11", "sigma22", "sigma12"};
  for (double v : cfg.voltages) {
    std::vector<double> xs, ys, mag, s11;
    for (auto i : sub) {
      const Vec2 x(m.embedding(static_cast<Eigen::Index>(i), 0), m.embedding(static_cast<Eigen::Index>(i), 1));
      const auto e = nn_param.evaluate(x, v);
      const auto s = nn::summarize_sigma(e.sigma);
      f8.add_row({v, x.x(), x.y(), e.drift.x(), e.drift.y(), s.s11, s.s22, s.d12});
      xs.push_back(x.x()), ys.push_back(x.y()), mag.push_back(e.drift.norm()), s11.push_back(s.s11);
    }
    const std::string tag = io::fmt(v);
    svg::scatter(svg_out("report/fig8_drift_norm_V" + tag + ".svg"), {"|nu|, V* = " + tag, "phi1", "phi2"}, xs, ys, mag);
    svg::scatter(svg_out("report/fig8_sigma11_V" + tag + ".svg"), {"sigma11, V* = " + tag, "phi1", "phi2"}, xs, ys, s11);
  }
  emit("report/fig8_param_coefficients.txt", f8);

  // Fig. 9: potentials.
  for (std::size_t v = 0; v < cfg.voltages.size(); ++v) {
    const auto t = io::read_table(join(out, "free_energy/potential_param_" + vtag(v) + ".txt"));
    emit("report/fig9_potential_" + vtag(v) + ".txt", t);
    const auto xs = column(t, 0), ys = column(t, 1);
    svg::heatmap(svg_out("report/fig9_potential_" + vtag(v) + ".svg"),
                 {"G/kT, V* = " + io::fmt(cfg.voltages[v]), "phi1", "phi2"}, 20, 20,
                 *std::min_element(xs.begin(), xs.end()), *std::max_element(xs.begin(), xs.end()),
                 *std::min_element(ys.begin(), ys.end()), *std::max_element(ys.begin(), ys.end()), column(t, 2));
  }

  // Fig. 10: external recording.
  emit("report/fig10_external.txt", io::read_table(join(out, "integrate/external.txt")));
  plot_paths(out, "report/fig10_external.txt", "fig10_external", "External recording vs parametric eSDE");
  mf.output("report/fig10_external_phi1.svg");
  mf.output("report/fig10_external_phi2.svg");

  // Ensemble maps when present.
  if (std::filesystem::exists(join(out, "uq/on_grid.txt"))) {
    const auto t = io::read_table(join(out, "uq/on_grid.txt"));
    emit("report/fig12_uq_grid.txt", t);
    const auto xs = column(t, 0), ys = column(t, 1);
    const char* names[] = {"mean_nu1", "mean_nu2", "mean_sigma11", "mean_sigma22", "mean_d12",
                           "std_nu1", "std_nu2", "std_sigma11", "std_sigma22", "std_d12"};
    for (std::size_t c = 0; c < 10; ++c)
      svg::heatmap(svg_out("report/fig12_" + std::string(names[c]) + ".svg"), {names[c], "phi1", "phi2"}, 20, 20,
                   *std::min_element(xs.begin(), xs.end()), *std::max_element(xs.begin(), xs.end()),
                   *std::min_element(ys.begin(), ys.end()), *std::max_element(ys.begin(), ys.end()), column(t, c + 2));
  }
  {
    const auto t = io::read_table(join(out, "compare/nn_vs_km_grid.txt"));
    emit("report/fig14_nn_vs_km.txt", t);
  }

  // Trend of the parametric model at the embedding center.
  const Vec2 center = m.embedding.colwise().mean().transpose();
  io::Table trend;
  trend.columns = {"voltage", "drift_norm", "sigma11", "sigma22", "diffusivity_trace"};
  for (double v : cfg.voltages) {
    const auto e = nn_param.evaluate(center, v);
    const Mat2 d = e.sigma * e.sigma.transpose();
    trend.add_row({v, e.drift.norm(), std::sqrt(d(0, 0)), std::sqrt(d(1, 1)), d.trace()});
  }
  io::write_table(join(out, "report/center_trend.txt"), trend,
                  "center=" + io::fmt(center.x()) + "," + io::fmt(center.y()));
  mf.output("report/center_trend.txt");
}

}  // namespace

// ---------------------------------------------------------------- config API

PhysicalParams PipelineConfig::physics_at(double v_star) const {
  PhysicalParams p = physics;
  p.v_star = v_star;
  return p;
}

std::size_t PipelineConfig::primary_index() const {
  for (std::size_t i = 0; i < voltages.size(); ++i)
    if (voltages[i] == primary_voltage) return i;
  throw DomainError("config: primary_voltage " + io::fmt(primary_voltage) + " is not in voltages");
}

void PipelineConfig::validate() const {
  physics.validate();
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw DomainError("config: " + what);
  };
  require(!voltages.empty(), "at least one voltage is required");
  for (double v : voltages) require(v > 0 && std::isfinite(v), "voltages must be > 0");
  primary_index();
  require(trajectories_per_voltage >= 1, "trajectories_per_voltage must be >= 1");
  require(frames >= 2, "frames must be >= 2");
  require(dt > 0 && save_interval >= dt, "need save_interval >= dt > 0");
  require(max_drift_step >= 0, "max_drift_step must be >= 0");
  require(init_radius_min > 0 && init_radius_max >= init_radius_min, "need 0 < init_radius_min <= init_radius_max");
  require(rg_threshold > 0, "rg_threshold must be > 0");
  require(corpus_target >= 10, "corpus_target must be >= 10");
  require(histogram_bins >= 1, "histogram_bins must be >= 1");
  require(grid_size >= 4, "grid_size must be >= 4");
  require(grid_dilation >= 0, "grid_dilation must be >= 0");
  require(h_diff > 0 && km_h > 0, "h_diff and km_h must be > 0");
  require(km_anchors >= 1 && km_replicas >= 2, "need km_anchors >= 1 and km_replicas >= 2");
  require(diff_anchors >= 1 && diff_replicas >= 1, "need diff_anchors >= 1 and diff_replicas >= 1");
  require(drift_stride.size() == voltages.size(), "drift_stride needs one entry per voltage");
  for (int s : drift_stride) require(s >= 1, "drift_stride entries must be >= 1");
  require(compare_paths >= 1 && param_compare_paths >= 1 && compare_frames >= 1, "comparison sizes must be >= 1");
  require(external_radius_scale > 0, "external_radius_scale must be > 0");
  require(external_particles >= 3, "external_particles must be >= 3");
  train.validate();
  param_train.validate();
}

std::string PipelineConfig::hash() const { return hash_hex(to_config().canonical()); }

const std::vector<std::pair<std::string, std::string>>& PipelineConfig::reference() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"N", "particles per configuration"},
      {"radius_nm", "particle radius a"},
      {"temperature_C", "temperature"},
      {"kT", "reduced thermal energy"},
      {"f_cm", "Clausius-Mossotti factor"},
      {"kappa_inv_nm", "Debye length"},
      {"B_pp", "double-layer prefactor (kT)"},
      {"V_xtal", "crystallization voltage (V)"},
      {"V_star", "normalized voltage for single runs"},
      {"d_g_um", "electrode gap (um)"},
      {"eps_r", "medium relative permittivity"},
      {"viscosity_mPa_s", "medium viscosity (reporting only)"},
      {"D0", "single-particle diffusivity (reduced)"},
      {"overlap_tolerance", "hard overlap floor (a)"},
      {"voltages", "comma list of V* values"},
      {"primary_voltage", "V* of the single-voltage models"},
      {"trajectories_per_voltage", "BD trajectories per voltage"},
      {"frames", "saved frames per trajectory"},
      {"save_interval", "frame interval (a^2/D0), one latent time unit"},
      {"dt", "BD time step (a^2/D0)"},
      {"max_drift_step", "per-step cap on force displacement (a), 0 = off"},
      {"init_radius_min", "smallest initial disk radius (a)"},
      {"init_radius_max", "largest initial disk radius (a)"},
      {"rg_threshold", "discard frames with normalized Rg above this"},
      {"corpus_target", "corpus size after histogram subsampling"},
      {"histogram_bins", "bins per axis of the (Rg, psi6) histogram"},
      {"neighbor_cutoff", "neighbor distance for psi6/C6 (a)"},
      {"coherence_threshold", "C6 bond coherence threshold"},
      {"grid_size", "density grid nodes per axis"},
      {"grid_dilation", "grid half-width dilation around the reference"},
      {"dmaps_epsilon", "kernel scale, <= 0 picks the median rule"},
      {"dmaps_alpha", "density normalization exponent"},
      {"dmaps_eigenpairs", "eigenpairs computed"},
      {"dmaps_threshold", "local linear regression residual cutoff"},
      {"dmaps_neighborhood", "neighborhood fraction for the regression"},
      {"h_diff", "diffusivity snapshot step (frames)"},
      {"km_h", "Kramers-Moyal burst duration (frames)"},
      {"km_anchors", "Kramers-Moyal anchors"},
      {"km_replicas", "burst replicas per anchor"},
      {"diff_anchors", "burst starts per voltage for diffusivity pairs"},
      {"diff_replicas", "replicas per diffusivity burst"},
      {"drift_stride", "frame stride (drift snapshot h) per voltage"},
      {"uq_models", "ensemble members, < 2 disables"},
      {"compare_paths", "paths per model in the primary comparison"},
      {"param_compare_paths", "paths per voltage for the parametric comparison"},
      {"compare_frames", "comparison horizon (frames)"},
      {"external_path", "external recording, empty synthesizes one"},
      {"external_radius_scale", "multiplies external positions into radii"},
      {"external_particles", "particles in the synthesized recording"},
      {"external_voltage", "V* of the external recording"},
      {"seed", "base seed"},
  };
  static const std::vector<std::pair<std::string, std::string>> all = [] {
    auto out = keys;
    const std::vector<std::pair<std::string, std::string>> train = {
        {"drift_hidden", "comma list of drift hidden widths"},
        {"diff_hidden", "comma list of diffusivity hidden widths"},
        {"drift_activation", "drift hidden activation"},
        {"diff_activation", "diffusivity hidden activation"},
        {"stage1_epochs", "epochs of joint training on drift pairs"},
        {"refine_epochs", "drift-only epochs with the diffusivity frozen"},
        {"stage2_epochs", "diffusivity epochs with the drift frozen"},
        {"batch_size", "minibatch size"},
        {"learning_rate", "Adam step size"},
        {"cosine_decay", "anneal the step size to zero along a half cosine in each stage"},
        {"zscore", "outlier z-score cutoff, <= 0 keeps all pairs"},
        {"validation_fraction", "held-out fraction for the validation loss"},
    };
    for (const auto& [prefix, who] : {std::pair<std::string, std::string>{"nn_", "single-voltage network: "},
                                      std::pair<std::string, std::string>{"param_", "parametric network: "}})
      for (const auto& [k, d] : train) out.emplace_back(prefix + k, who + d);
    return out;
  }();
  return all;
}

PipelineConfig PipelineConfig::from_config(const KeyValueConfig& c) {
  std::set<std::string> known;
  for (const auto& [k, d] : reference()) known.insert(k);
  for (const auto& [k, v] : c.values())
    if (!known.count(k)) throw FormatError("unknown config key '" + k + "'");

  PipelineConfig p;
  p.physics = PhysicalParams::from_config(c);
  p.voltages = c.get_doubles("voltages", p.voltages);
  p.primary_voltage = c.get_double("primary_voltage", p.voltages.empty() ? 0.0 : p.voltages.back());
  p.trajectories_per_voltage = static_cast<int>(c.get_int("trajectories_per_voltage", p.trajectories_per_voltage));
  p.frames = static_cast<int>(c.get_int("frames", p.frames));
  p.save_interval = c.get_double("save_interval", p.save_interval);
  p.dt = c.get_double("dt", p.dt);
  p.max_drift_step = c.get_double("max_drift_step", p.max_drift_step);
  p.init_radius_min = c.get_double("init_radius_min", p.init_radius_min);
  p.init_radius_max = c.get_double("init_radius_max", p.init_radius_max);
  p.rg_threshold = c.get_double("rg_threshold", p.rg_threshold);
  p.corpus_target = static_cast<int>(c.get_int("corpus_target", p.corpus_target));
  p.histogram_bins = static_cast<int>(c.get_int("histogram_bins", p.histogram_bins));
  p.order.neighbor_cutoff = c.get_double("neighbor_cutoff", p.order.neighbor_cutoff);
  p.order.coherence_threshold = c.get_double("coherence_threshold", p.order.coherence_threshold);
  p.grid_size = static_cast<int>(c.get_int("grid_size", p.grid_size));
  p.grid_dilation = c.get_double("grid_dilation", p.grid_dilation);
  p.dmaps.epsilon = c.get_double("dmaps_epsilon", p.dmaps.epsilon);
  p.dmaps.alpha = c.get_double("dmaps_alpha", p.dmaps.alpha);
  p.dmaps.n_eigenpairs = static_cast<int>(c.get_int("dmaps_eigenpairs", p.dmaps.n_eigenpairs));
  p.dmaps.selection.threshold = c.get_double("dmaps_threshold", p.dmaps.selection.threshold);
  p.dmaps.selection.neighborhood_fraction = c.get_double("dmaps_neighborhood", p.dmaps.selection.neighborhood_fraction);
  p.h_diff = c.get_double("h_diff", p.h_diff);
  p.km_h = c.get_double("km_h", p.km_h);
  p.km_anchors = static_cast<int>(c.get_int("km_anchors", p.km_anchors));
  p.km_replicas = static_cast<int>(c.get_int("km_replicas", p.km_replicas));
  p.diff_anchors = static_cast<int>(c.get_int("diff_anchors", p.diff_anchors));
  p.diff_replicas = static_cast<int>(c.get_int("diff_replicas", p.diff_replicas));
  p.drift_stride = c.get_ints("drift_stride", std::vector<int>(p.voltages.size(), 1));
  p.train = train_from(c, "nn_", p.train);
  p.param_train = train_from(c, "param_", default_param_train());
  p.uq_models = static_cast<int>(c.get_int("uq_models", p.uq_models));
  p.compare_paths = static_cast<int>(c.get_int("compare_paths", p.compare_paths));
  p.param_compare_paths = static_cast<int>(c.get_int("param_compare_paths", p.param_compare_paths));
  p.compare_frames = static_cast<int>(c.get_int("compare_frames", p.compare_frames));
  p.external_path = c.get_string("external_path", p.external_path);
  p.external_radius_scale = c.get_double("external_radius_scale", p.external_radius_scale);
  p.external_particles = static_cast<int>(c.get_int("external_particles", p.external_particles));
  p.external_voltage = c.get_double("external_voltage", p.external_voltage);
  const auto seed = c.get_string("seed", "1");
  try {
    std::size_t used = 0;
    p.seed = std::stoull(seed, &used);
    if (used != seed.size()) throw std::invalid_argument(seed);
  } catch (const std::exception&) {
    throw FormatError("config key 'seed': expected an unsigned integer, got '" + seed + "'");
  }
  p.validate();
  return p;
}

KeyValueConfig PipelineConfig::to_config() const {
  KeyValueConfig c = physics.to_config();
  c.set("voltages", list_text(voltages));
  c.set("primary_voltage", io::fmt(primary_voltage));
  c.set("trajectories_per_voltage", std::to_string(trajectories_per_voltage));
  c.set("frames", std::to_string(frames));
  c.set("save_interval", io::fmt(save_interval));
  c.set("dt", io::fmt(dt));
  c.set("max_drift_step", io::fmt(max_drift_step));
  c.set("init_radius_min", io::fmt(init_radius_min));
  c.set("init_radius_max", io::fmt(init_radius_max));
  c.set("rg_threshold", io::fmt(rg_threshold));
  c.set("corpus_target", std::to_string(corpus_target));
  c.set("histogram_bins", std::to_string(histogram_bins));
  c.set("neighbor_cutoff", io::fmt(order.neighbor_cutoff));
  c.set("coherence_threshold", io::fmt(order.coherence_threshold));
  c.set("grid_size", std::to_string(grid_size));
  c.set("grid_dilation", io::fmt(grid_dilation));
  c.set("dmaps_epsilon", io::fmt(dmaps.epsilon));
  c.set("dmaps_alpha", io::fmt(dmaps.alpha));
  c.set("dmaps_eigenpairs", std::to_string(dmaps.n_eigenpairs));
  c.set("dmaps_threshold", io::fmt(dmaps.selection.threshold));
  c.set("dmaps_neighborhood", io::fmt(dmaps.selection.neighborhood_fraction));
  c.set("h_diff", io::fmt(h_diff));
  c.set("km_h", io::fmt(km_h));
  c.set("km_anchors", std::to_string(km_anchors));
  c.set("km_replicas", std::to_string(km_replicas));
  c.set("diff_anchors", std::to_string(diff_anchors));
  c.set("diff_replicas", std::to_string(diff_replicas));
  c.set("drift_stride", list_text(drift_stride));
  put_train(c, "nn_", train);
  put_train(c, "param_", param_train);
  c.set("uq_models", std::to_string(uq_models));
  c.set("compare_paths", std::to_string(compare_paths));
  c.set("param_compare_paths", std::to_string(param_compare_paths));
  c.set("compare_frames", std::to_string(compare_frames));
  c.set("external_path", external_path);
  c.set("external_radius_scale", io::fmt(external_radius_scale));
  c.set("external_particles", std::to_string(external_particles));
  c.set("external_voltage", io::fmt(external_voltage));
  c.set("seed", std::to_string(seed));
  return c;
}

// ---------------------------------------------------------------- library ops

std::vector<std::size_t> subsample_uniform(const std::vector<double>& rg, const std::vector<double>& psi6, int bins,
                                           std::size_t target, int* cap_out) {
  if (rg.size() != psi6.size()) throw DomainError("subsample_uniform: input lengths differ");
  if (bins < 1) throw DomainError("subsample_uniform: bins must be >= 1");
  if (rg.empty()) return {};
  const auto [rmin, rmax] = std::minmax_element(rg.begin(), rg.end());
  const double lo = *rmin, span = std::max(*rmax - *rmin, 1e-300);
  auto bin_of = [&](std::size_t i) {
    const int a = std::clamp(static_cast<int>((rg[i] - lo) / span * bins), 0, bins - 1);
    const int b = std::clamp(static_cast<int>(psi6[i] * bins), 0, bins - 1);
    return a * bins + b;
  };
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins * bins), 0);
  for (std::size_t i = 0; i < rg.size(); ++i) ++counts[static_cast<std::size_t>(bin_of(i))];
  const std::size_t largest = *std::max_element(counts.begin(), counts.end());
  std::size_t cap = largest;
  for (std::size_t c = 1; c <= largest; ++c) {
    std::size_t kept = 0;
    for (auto n : counts) kept += std::min(n, c);
    if (kept >= target) {
      cap = c;
      break;
    }
  }
  if (cap_out) *cap_out = static_cast<int>(cap);
  // Within a bin keep an evenly strided subset so no single trajectory dominates.
  std::vector<std::vector<std::size_t>> members(counts.size());
  for (std::size_t i = 0; i < rg.size(); ++i) members[static_cast<std::size_t>(bin_of(i))].push_back(i);
  std::vector<char> keep(rg.size(), 0);
  for (const auto& mem : members)
    for (auto i : evenly(mem, static_cast<int>(cap))) keep[i] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < rg.size(); ++i)
    if (keep[i]) out.push_back(i);
  return out;
}

PathStats path_statistics(const std::vector<std::vector<Vec2>>& paths, double h) {
  PathStats s;
  s.n_paths = static_cast<int>(paths.size());
  std::size_t len = 0;
  for (const auto& p : paths) len = std::max(len, p.size());
  const auto n = static_cast<Eigen::Index>(len);
  s.mean = MatX::Constant(n, 2, kNaN);
  s.lo = MatX::Constant(n, 2, kNaN);
  s.hi = MatX::Constant(n, 2, kNaN);
  s.count.assign(len, 0);
  for (std::size_t k = 0; k < len; ++k) {
    s.t.push_back(static_cast<double>(k) * h);
    Vec2 sum = Vec2::Zero(), lo = Vec2::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    int c = 0;
    for (const auto& p : paths) {
      if (k >= p.size() || !p[k].allFinite()) continue;
      sum += p[k];
      lo = lo.cwiseMin(p[k]);
      hi = hi.cwiseMax(p[k]);
      ++c;
    }
    s.count[k] = c;
    if (c == 0) continue;
    const auto kk = static_cast<Eigen::Index>(k);
    s.mean.row(kk) = (sum / c).transpose();
    // The mean can drift one ulp outside the extremes; keep it inside the envelope.
    s.mean.row(kk) = s.mean.row(kk).cwiseMax(lo.transpose()).cwiseMin(hi.transpose());
    s.lo.row(kk) = lo.transpose();
    s.hi.row(kk) = hi.transpose();
  }
  return s;
}

PathComparison compare_paths(const std::vector<NamedModel>& models, const std::vector<std::vector<Vec2>>& bd_latent,
                             int n_paths, const Vec2& x0, double h, int n_steps, double p, std::uint64_t seed) {
  if (n_paths < 1) throw DomainError("compare_paths: n_paths must be >= 1");
  if (n_steps < 0) throw DomainError("compare_paths: n_steps must be >= 0");
  if (!x0.allFinite()) throw DomainError("compare_paths: initial condition is not finite");
  PathComparison c;
  if (!bd_latent.empty()) {
    c.labels.push_back("bd");
    c.stats.push_back(path_statistics(bd_latent, h));
  }
  for (std::size_t k = 0; k < models.size(); ++k) {
    std::vector<std::vector<Vec2>> paths(static_cast<std::size_t>(n_paths));
    std::vector<char> bad(static_cast<std::size_t>(n_paths), 0);
    const std::uint64_t base = derive_seed(seed, k);
    parallel_for(n_paths, [&](long long i) {
      try {
        paths[static_cast<std::size_t>(i)] =
            sde::em_integrate(*models[k].model, x0, h, n_steps, derive_seed(base, static_cast<std::uint64_t>(i)), p);
      } catch (const NumericalError&) {
        bad[static_cast<std::size_t>(i)] = 1;
      }
    });
    std::vector<std::vector<Vec2>> ok;
    for (std::size_t i = 0; i < paths.size(); ++i)
      if (!bad[i]) ok.push_back(std::move(paths[i]));
    auto st = path_statistics(ok, h);
    st.n_paths = n_paths;
    st.diverged = static_cast<int>(std::count(bad.begin(), bad.end(), 1));
    c.labels.push_back(models[k].label);
    c.stats.push_back(std::move(st));
  }
  return c;
}

void write_path_table(const std::string& path, const PathComparison& c) {
  io::Table t;
  t.columns = {"t"};
  std::size_t len = 0;
  for (const auto& s : c.stats) len = std::max(len, s.t.size());
  std::string note;
  for (std::size_t k = 0; k < c.labels.size(); ++k) {
    for (const char* coord : {"phi1", "phi2"})
      for (const char* stat : {"mean", "min", "max"}) t.columns.push_back(c.labels[k] + "_" + coord + "_" + stat);
    note += c.labels[k] + ": paths=" + std::to_string(c.stats[k].n_paths) +
            " diverged=" + std::to_string(c.stats[k].diverged) + "; ";
  }
  for (std::size_t i = 0; i < len; ++i) {
    std::vector<double> row;
    double ti = kNaN;
    for (const auto& s : c.stats)
      if (i < s.t.size()) ti = s.t[i];
    row.push_back(ti);
    for (const auto& s : c.stats) {
      const auto r = static_cast<Eigen::Index>(i);
      for (int d = 0; d < 2; ++d) {
        const bool have = i < s.t.size();
        row.push_back(have ? s.mean(r, d) : kNaN);
        row.push_back(have ? s.lo(r, d) : kNaN);
        row.push_back(have ? s.hi(r, d) : kNaN);
      }
    }
    t.add_row(row);
  }
  io::write_table(path, t, note);
}

// ---------------------------------------------------------------- manifest

RunManifest::RunManifest(std::string out_dir) : out_(std::move(out_dir)) {}

void RunManifest::begin(const std::string& stage, const PipelineConfig& cfg) {
  stage_ = stage;
  started_ = utc_now();
  inputs_.clear();
  outputs_.clear();
  config_hash_ = cfg.hash();
  seed_ = cfg.seed;
}

void RunManifest::input(const std::string& rel) {
  if (std::find(inputs_.begin(), inputs_.end(), rel) == inputs_.end()) inputs_.push_back(rel);
}

void RunManifest::output(const std::string& rel) {
  if (std::find(outputs_.begin(), outputs_.end(), rel) == outputs_.end()) outputs_.push_back(rel);
}

void RunManifest::finish() {
  nlohmann::json j = nlohmann::json::object();
  if (std::filesystem::exists(path())) {
    try {
      j = nlohmann::json::parse(io::read_file(path()));
    } catch (const nlohmann::json::exception&) {
      j = nlohmann::json::object();
    }
  }
  if (!j.is_object() || j.value("config_hash", config_hash_) != config_hash_) j = nlohmann::json::object();
  j["format"] = "esde-manifest";
  j["config_hash"] = config_hash_;
  j["seed"] = seed_;
  j["versions"] = {{"esde", kVersion}};
  auto hashes = [&](const std::vector<std::string>& rels) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& r : rels) m[r] = std::filesystem::exists(join(out_, r)) ? hash_file(join(out_, r)) : "missing";
    return m;
  };
  nlohmann::json s;
  s["inputs"] = hashes(inputs_);
  s["outputs"] = hashes(outputs_);
  s["started"] = started_;
  s["finished"] = utc_now();
  j["stages"][stage_] = s;
  for (const auto& [rel, h] : s["outputs"].items()) j["artifacts"][rel] = h;
  io::write_file(path(), j.dump(1) + "\n");
}

const std::vector<std::string>& stages() {
  static const std::vector<std::string> s = {"simulate", "order-params", "featurize", "dmaps",        "restrict",
                                             "fit-km",   "fit-nn",       "integrate", "free-energy", "compare",
                                             "uq",       "report"};
  return s;
}

void run_stage(const std::string& stage, const PipelineConfig& cfg, const std::string& out) {
  cfg.validate();
  io::ensure_dir(out);
  RunManifest mf(out);
  mf.begin(stage, cfg);
  io::write_file(join(out, "config.txt"), cfg.to_config().canonical());
  if (stage == "simulate") stage_simulate(cfg, out, mf);
  else if (stage == "order-params") stage_order(cfg, out, mf);
  else if (stage == "featurize") stage_featurize(cfg, out, mf);
  else if (stage == "dmaps") stage_dmaps(cfg, out, mf);
  else if (stage == "restrict") stage_restrict(cfg, out, mf);
  else if (stage == "fit-km") stage_fit_km(cfg, out, mf);
  else if (stage == "fit-nn") stage_fit_nn(cfg, out, mf);
  else if (stage == "integrate") stage_integrate(cfg, out, mf);
  else if (stage == "free-energy") stage_free_energy(cfg, out, mf);
  else if (stage == "compare") stage_compare(cfg, out, mf);
  else if (stage == "uq") stage_uq(cfg, out, mf);
  else if (stage == "report") stage_report(cfg, out, mf);
  else throw DomainError("unknown stage '" + stage + "'");
  mf.output("config.txt");
  mf.finish();
}

void run_all(const PipelineConfig& cfg, const std::string& out, const std::function<void(const std::string&)>& progress) {
  for (const auto& s : stages()) {
    if (progress) progress(s);
    run_stage(s, cfg, out);
  }
}

}  // namespace esde::pipeline
