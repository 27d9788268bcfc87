#include "esde/brownian.hpp"
#include "esde/dmaps.hpp"
#include "esde/featurize.hpp"
#include "esde/free_energy.hpp"
#include "esde/hash.hpp"
#include "esde/io.hpp"
#include "esde/kramers_moyal.hpp"
#include "esde/nn_sde.hpp"
#include "esde/sde_model.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace esde;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string g_desk_dir = "desk_run";
std::string g_scratch = (fs::temp_directory_path() / "esde_acceptance").string();

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Points random_configuration(int n, double radius, double min_sep, Rng& rng) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Points x(n, 2);
  int placed = 0;
  while (placed < n) {
    const Vec2 c(u(rng), u(rng));
    if (c.norm() > radius) continue;
    bool ok = true;
    for (int k = 0; k < placed && ok; ++k) ok = (x.row(k).transpose() - c).norm() >= min_sep;
    if (ok) x.row(placed++) = c.transpose();
  }
  return x;
}

// Circular correlation of two angle samples; sign-free.
double circular_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double sa = 0, ca = 0, sb = 0, cb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += std::sin(a[i]), ca += std::cos(a[i]);
    sb += std::sin(b[i]), cb += std::cos(b[i]);
  }
  const double ma = std::atan2(sa, ca), mb = std::atan2(sb, cb);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = std::sin(a[i] - ma), y = std::sin(b[i] - mb);
    num += x * y, da += x * x, db += y * y;
  }
  return std::abs(num / std::sqrt(da * db));
}

double pearson(const VecX& a, const VecX& b) {
  const VecX x = a.array() - a.mean(), y = b.array() - b.mean();
  return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
}

// Noisy ring of Gaussian blobs rendered on a 24 x 24 grid.
MatX ring_densities(int m, std::uint64_t seed, std::vector<double>* angles) {
  feat::Grid g;
  g.size = 24;
  g.xmin = g.ymin = -2.0;
  g.xmax = g.ymax = 2.0;
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  std::normal_distribution<double> jitter(0.0, 0.03);
  MatX f(m, g.size * g.size);
  angles->resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double a = u(rng);
    (*angles)[static_cast<std::size_t>(i)] = a;
    Points x(1, 2);
    const double r = 1.0 + jitter(rng);
    x << r * std::cos(a) + jitter(rng), r * std::sin(a) + jitter(rng);
    f.row(i) = feat::kde_density(x, g, 0.35).values.transpose();
  }
  return f;
}

// Exact transitions of dX = A X dt + S dB for diagonalizable A, sampled with fine Euler steps.
std::vector<sde::SnapshotPair> linear_pairs(const sde::Model& m, int n, double box, double h, double p,
                                            std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(-box, box);
  std::vector<Vec2> starts(static_cast<std::size_t>(n));
  for (auto& s : starts) s = Vec2(u(rng), u(rng));
  return sde::sample_pairs(m, starts, h, 20, p, derive_seed(seed, 1));
}

// ------------------------------------------------------------------ criteria

Verdict forces() {
  const PhysicalParams p;
  Rng rng = make_rng(101);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    // Half the configurations include a pair inside a few Debye lengths.
    Points x = random_configuration(10, 9.0, 2.3, rng);
    if (c % 2 == 0) {
      const double gap = 2.0 + 0.02 * (1 + c % 5);
      std::uniform_real_distribution<double> ang(0.0, 2 * kPi);
      for (bool clear = false; !clear;) {
        const double a = ang(rng);
        x.row(1) = x.row(0) + gap * Vec2(std::cos(a), std::sin(a)).transpose();
        clear = true;
        for (int k = 2; k < 10; ++k) clear = clear && (x.row(k) - x.row(1)).norm() >= 2.3;
      }
    }
    const Points f = bd::total_forces(x, p);
    for (int i = 0; i < 10; ++i)
      for (int d = 0; d < 2; ++d) {
        const double step = 1e-6;
        Points a = x, b = x;
        a(i, d) += step;
        b(i, d) -= step;
        const double fd = -(bd::total_energy(a, p) - bd::total_energy(b, p)) / (2 * step);
        worst = std::max(worst, std::abs(f(i, d) - fd) / std::max(std::abs(f(i, d)), 1.0));
      }
  }
  return {worst <= 1e-6, "max relative error " + num(worst) + " (limit 1e-6)"};
}

Verdict free_diffusion() {
  PhysicalParams p;
  p.v_star = 0.0;
  bd::StepOptions o;
  o.interactions = false;
  const int replicas = 10000, steps = 100;
  const double dt = 1e-3;
  std::vector<double> msd(steps + 1, 0.0);
  for (int r = 0; r < replicas; ++r) {
    bd::Configuration c;
    c.positions = Points::Zero(1, 2);
    const auto t = bd::simulate(c, steps * dt, dt, dt, derive_seed(202, r), p, o);
    for (int k = 0; k <= steps; ++k) msd[k] += t.frames[k].positions.row(0).squaredNorm() / replicas;
  }
  // Least-squares slope through the origin.
  double num_ = 0, den = 0;
  for (int k = 1; k <= steps; ++k) num_ += k * dt * msd[k], den += (k * dt) * (k * dt);
  const double slope = num_ / den;
  const double rel = std::abs(slope / (4.0 * p.d0) - 1.0);
  return {rel <= 0.05, "MSD slope " + num(slope) + " vs 4 D0 = 4 (relative error " + num(rel) + ", limit 0.05)"};
}

Verdict manifold_recovery() {
  std::vector<double> angles;
  const MatX f = ring_densities(2000, 303, &angles);
  auto ring_correlation = [&](double eps) {
    dmaps::Settings rs;
    rs.epsilon = eps;
    const MatX e = dmaps::build(f, rs).embedding();
    std::vector<double> rec(angles.size());
    for (std::size_t i = 0; i < rec.size(); ++i)
      rec[i] = std::atan2(e(static_cast<Eigen::Index>(i), 1), e(static_cast<Eigen::Index>(i), 0));
    return circular_correlation(angles, rec);
  };
  // Pairwise density distances saturate, so the median bandwidth is near global; a tenth of it is local.
  const double median_eps = dmaps::choose_epsilon(f);
  const double rho = ring_correlation(median_eps / 10.0);
  const double rho_median = ring_correlation(median_eps);

  // 2:1 strip: the first long-axis harmonic must be rejected and the transverse direction kept.
  Rng rng = make_rng(304);
  std::uniform_real_distribution<double> ux(0.0, 2.0), uy(0.0, 1.0);
  MatX s(1500, 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, 0) = ux(rng), s(i, 1) = uy(rng);
  dmaps::Settings st;
  st.epsilon = 0.005;
  const auto ms = dmaps::build(s, st);
  const VecX harmonic = (s.col(0).array() * kPi).cos();
  int h = 2;
  for (int k = 3; k < ms.eigenvectors.cols(); ++k)
    if (std::abs(pearson(ms.eigenvectors.col(k), harmonic)) > std::abs(pearson(ms.eigenvectors.col(h), harmonic)))
      h = k;
  const double r_harm = ms.selection.residuals[static_cast<std::size_t>(h)];
  const bool rejected = r_harm <= 0.5 && ms.selection.indices[1] != h;
  const double transverse = std::abs(pearson(ms.eigenvectors.col(ms.selection.indices[1]), s.col(1)));
  const bool ok = rho >= 0.99 && rejected && transverse >= 0.9;
  return {ok, "circular correlation " + num(rho) + " at median/10 bandwidth (limit 0.99), " + num(rho_median) +
                  " at the median; strip harmonic column " + std::to_string(h) +
                  " residual " + num(r_harm) + (rejected ? " rejected" : " NOT rejected") + "; selected (" +
                  std::to_string(ms.selection.indices[0]) + ", " + std::to_string(ms.selection.indices[1]) +
                  "), transverse correlation " + num(transverse) + " (limit 0.9)"};
}

Verdict nystrom_round_trip() {
  std::vector<double> angles;
  const MatX f = ring_densities(1000, 404, &angles);
  const auto m = dmaps::build(f);
  std::vector<int> used;
  for (int k = 0; k < m.eigenvalues.size(); ++k)
    if (std::abs(m.eigenvalues(k)) >= 1e-6) used.push_back(k);
  dmaps::DiffusionMapModel sub = m;
  sub.eigenvalues.resize(static_cast<Eigen::Index>(used.size()));
  sub.eigenvectors.resize(m.eigenvectors.rows(), static_cast<Eigen::Index>(used.size()));
  for (std::size_t c = 0; c < used.size(); ++c) {
    sub.eigenvalues(static_cast<Eigen::Index>(c)) = m.eigenvalues(used[c]);
    sub.eigenvectors.col(static_cast<Eigen::Index>(c)) = m.eigenvectors.col(used[c]);
  }
  const MatX r = dmaps::nystrom_all(sub, f);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < r.cols(); ++c)
    worst = std::max(worst, (r.col(c) - sub.eigenvectors.col(c)).cwiseAbs().maxCoeff() /
                                sub.eigenvectors.col(c).cwiseAbs().maxCoeff());
  const MatX lat = dmaps::nystrom_restrict_batch(m, f);
  const MatX emb = m.embedding();
  const double latent = (lat - emb).cwiseAbs().maxCoeff() / emb.cwiseAbs().maxCoeff();
  worst = std::max(worst, latent);
  return {worst <= 1e-6, std::to_string(used.size()) + " eigenvectors with |lambda| >= 1e-6; max relative error " +
                             num(worst) + " (limit 1e-6)"};
}

Verdict kramers_moyal_oracle() {
  const double theta = 1.0, sigma = 0.5, h = 0.01;
  std::vector<Vec2> anchors;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 5; ++i) anchors.emplace_back(-1.0 + 0.5 * i, -0.9 + 0.6 * j);
  const km::BurstFn burst = [&](std::size_t a, const Vec2& x0, int n, double hh) {
    Rng rng = make_rng(505, a);
    std::normal_distribution<double> z(0.0, 1.0);
    const double decay = std::exp(-theta * hh);
    const double sd = sigma * std::sqrt((1 - decay * decay) / (2 * theta));
    std::vector<Vec2> out(static_cast<std::size_t>(n));
    for (auto& e : out) e = decay * x0 + Vec2(sd * z(rng), sd * z(rng));
    return out;
  };
  const auto model = km::km_field(anchors, burst, 100000, h);
  double sxx = 0, sxy[2] = {0, 0}, mx[2] = {0, 0}, my[2] = {0, 0};
  const double n = static_cast<double>(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a)
    for (int d = 0; d < 2; ++d) mx[d] += anchors[a](d) / n, my[d] += model.values()[a].drift(d) / n;
  double slope[2];
  double worst_sigma = 0.0;
  for (int d = 0; d < 2; ++d) {
    sxx = 0, sxy[d] = 0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      sxx += (anchors[a](d) - mx[d]) * (anchors[a](d) - mx[d]);
      sxy[d] += (anchors[a](d) - mx[d]) * (model.values()[a].drift(d) - my[d]);
    }
    slope[d] = sxy[d] / sxx;
  }
  for (const auto& v : model.values())
    for (int d = 0; d < 2; ++d) worst_sigma = std::max(worst_sigma, std::abs(v.sigma(d) * v.sigma(d) / 0.25 - 1.0));
  const double worst_slope = std::max(std::abs(slope[0] + 1.0), std::abs(slope[1] + 1.0));
  return {worst_slope <= 0.05 && worst_sigma <= 0.05,
          "drift slopes " + num(slope[0]) + ", " + num(slope[1]) + " (target -1 +- 5%); worst diffusivity error " +
              num(worst_sigma) + " (limit 0.05)"};
}

struct LinearTruth {
  Mat2 a, s;
};

Verdict nn_oracle() {
  LinearTruth t;
  t.a << -0.6, 0.3, -0.3, -0.5;
  t.s << 0.5, 0.0, 0.15, 0.35;
  const sde::LinearModel truth(t.a, t.s);
  const auto drift = linear_pairs(truth, 100000, 1.5, 0.1, 0.0, 601);
  const auto diff = linear_pairs(truth, 20000, 1.5, 0.01, 0.0, 602);
  nn::TrainConfig cfg;
  cfg.stage1_epochs = 20;
  cfg.stage2_epochs = 15;
  cfg.batch_size = 64;
  cfg.seed = 603;
  const auto fit = nn::train_two_stage(drift, diff, cfg);

  Rng rng = make_rng(604);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  double err2 = 0, ref2 = 0, derr2 = 0, dref2 = 0;
  bool spd = true;
  const Mat2 d_true = t.s * t.s.transpose();
  for (int i = 0; i < 500; ++i) {
    const Vec2 x(u(rng), u(rng));
    const auto e = fit.model.evaluate(x, 0.0);
    const Vec2 nu = truth.drift(x, 0.0);
    err2 += (e.drift - nu).squaredNorm();
    ref2 += nu.squaredNorm();
    const Mat2 d = e.sigma * e.sigma.transpose();
    spd = spd && Eigen::SelfAdjointEigenSolver<Mat2>(d).eigenvalues().minCoeff() > 0;
    derr2 += (d - d_true).squaredNorm();
    dref2 += d_true.squaredNorm();
  }
  const double drift_rel = std::sqrt(err2 / ref2), diff_rel = std::sqrt(derr2 / dref2);

  // Gradient check on the trained model, per layer.
  const std::vector<sde::SnapshotPair> batch(drift.begin(), drift.begin() + 64);
  nn::MlpSdeModel probe = fit.model;
  probe.drift_trainable = probe.diff_trainable = true;
  const VecX g = nn::loss_gradient(batch, probe);
  const VecX w = probe.trainable_parameters();
  double worst_layer = 0.0;
  Eigen::Index off = 0;
  for (const nn::Mlp* net : {&fit.model.drift_net(), &fit.model.diff_net()})
    for (const auto& l : net->layers()) {
      const Eigen::Index len = l.weight.size() + l.bias.size();
      VecX fd(len);
      for (Eigen::Index k = 0; k < len; ++k) {
        const double step = 1e-7 * std::max(1.0, std::abs(w(off + k)));
        VecX a = w, b = w;
        a(off + k) += step;
        b(off + k) -= step;
        probe.set_trainable_parameters(a);
        const double la = nn::nll_loss(batch, probe);
        probe.set_trainable_parameters(b);
        const double lb = nn::nll_loss(batch, probe);
        fd(k) = (la - lb) / (2 * step);
      }
      worst_layer = std::max(worst_layer, (fd - g.segment(off, len)).norm() / std::max(fd.norm(), 1e-12));
      off += len;
    }
  const bool ok = drift_rel <= 0.10 && diff_rel <= 0.15 && spd && worst_layer <= 1e-4;
  return {ok, "drift RMS error " + num(drift_rel) + " of field RMS (limit 0.10); diffusivity error " + num(diff_rel) +
                  " (limit 0.15); SPD " + (spd ? "yes" : "NO") + "; worst layer gradient error " +
                  num(worst_layer) + " (limit 1e-4)"};
}

bool strictly(const std::vector<double>& v, bool increasing) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (increasing ? !(v[i] > v[i - 1]) : !(v[i] < v[i - 1])) return false;
  return true;
}

Verdict parameter_monotonicity() {
  Mat2 a0, s0;
  a0 << -1.0, 0.4, -0.4, -0.8;
  s0 << 0.35, 0.0, 0.1, 0.3;
  const sde::LinearModel family(a0, s0, Vec2::Zero(), true);
  const std::vector<double> ps{0.5, 0.6, 0.7, 0.8};
  std::vector<sde::SnapshotPair> drift, diff;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto d = linear_pairs(family, 10000, 1.5, 0.05, ps[k], 700 + k);
    const auto q = linear_pairs(family, 5000, 1.5, 0.01, ps[k], 710 + k);
    drift.insert(drift.end(), d.begin(), d.end());
    diff.insert(diff.end(), q.begin(), q.end());
  }
  nn::TrainConfig cfg;
  cfg.arch = nn::Architecture::parametric();
  cfg.stage1_epochs = 25;
  cfg.stage2_epochs = 15;
  cfg.batch_size = 64;
  cfg.seed = 720;
  const auto fit = nn::train_two_stage(drift, diff, cfg);
  Rng rng = make_rng(721);
  std::uniform_real_distribution<double> ang(0.0, 2 * kPi), rad(0.6, 1.2);
  int good = 0;
  for (int i = 0; i < 10; ++i) {
    const double th = ang(rng), r = rad(rng);
    const Vec2 x(r * std::cos(th), r * std::sin(th));
    std::vector<double> drift_norm, diffusivity;
    for (double p : ps) {
      const auto e = fit.model.evaluate(x, p);
      drift_norm.push_back(e.drift.norm());
      diffusivity.push_back((e.sigma * e.sigma.transpose()).trace());
    }
    good += strictly(drift_norm, true) && strictly(diffusivity, false);
  }
  std::string detail = "synthetic family: " + std::to_string(good) + "/10 probes monotone";
  bool ok = good == 10;

  // Desk-scale Brownian-dynamics trend at the embedding centre.
  const std::string trend = g_desk_dir + "/report/center_trend.txt";
  if (!fs::exists(trend)) {
    detail += "; BD trend table missing (" + trend + ")";
    ok = false;
  } else {
    const auto t = io::read_table(trend);
    std::vector<double> dn, tr;
    for (const auto& row : t.rows) dn.push_back(row[1]), tr.push_back(row[4]);
    const bool up = strictly(dn, true), down = strictly(tr, false);
    detail += "; BD centre drift";
    for (double v : dn) detail += " " + num(v);
    detail += std::string(up ? " increasing" : " NOT increasing") + ", diffusivity";
    for (double v : tr) detail += " " + num(v);
    detail += down ? " decreasing" : " NOT decreasing";
    ok = ok && up && down;
  }
  return {ok, detail};
}

Verdict free_energy_oracle() {
  const double theta = 1.5, s = 0.7;
  const sde::LinearModel ou(-theta * Mat2::Identity(), s * Mat2::Identity());
  const nn::GridSpec2 grid{-1.0, 0.9, -1.0, 0.9, 20, 20};
  const auto f = fe::effective_potential(ou, grid, 0.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.nodes.size(); ++i) {
    const double exact = theta * f.nodes[i].squaredNorm() / (s * s);
    if (exact < 1e-12) continue;
    worst = std::max(worst, std::abs(f.values(static_cast<Eigen::Index>(i)) - exact) / exact);
  }
  fe::PotentialSettings fine;
  fine.substeps = 400;
  const auto g = fe::effective_potential(ou, grid, 0.0, fine);
  const double change = (g.values - f.values).cwiseAbs().maxCoeff() / g.values.cwiseAbs().maxCoeff();
  return {worst <= 1e-2 && change <= 1e-4,
          "max relative error " + num(worst) + " (limit 1e-2); sub-step halving change " + num(change) +
              " (limit 1e-4)"};
}

Verdict split_sample() {
  Mat2 a;
  a << -1.0, 0.3, -0.3, -0.8;
  const sde::LinearModel truth(a, 0.4 * Mat2::Identity());
  const auto drift = linear_pairs(truth, 8000, 1.5, 1.0, 0.0, 901);
  const auto diff = linear_pairs(truth, 4000, 1.5, 0.01, 0.0, 902);
  const std::size_t hd = drift.size() / 2, hq = diff.size() / 2;
  const std::vector<sde::SnapshotPair> da(drift.begin(), drift.begin() + hd), db(drift.begin() + hd, drift.end());
  const std::vector<sde::SnapshotPair> qa(diff.begin(), diff.begin() + hq), qb(diff.begin() + hq, diff.end());
  nn::TrainConfig cfg;
  cfg.arch.drift_hidden = cfg.arch.diff_hidden = {16, 16};
  cfg.stage1_epochs = 20;
  cfg.stage2_epochs = 10;
  cfg.seed = 903;
  const auto fa = nn::train_two_stage(da, qa, cfg);
  const auto fb = nn::train_two_stage(db, qb, cfg);
  const auto uq = nn::ensemble_uq(da, qa, cfg, 6, 0.0);
  std::vector<Vec2> x0;
  for (const auto& s : da) x0.push_back(s.x0);
  const auto cmp = nn::compare_models(fa.model, fb.model, nn::GridSpec2::bounding(x0), 0.0);
  // Two independent fits differ by sqrt(2) ensemble deviations at matched scale.
  const Eigen::Vector4d sd = std::sqrt(2.0) * uq.on_grid.stddev.leftCols(4).colwise().mean().transpose();
  const char* names[4] = {"nu1", "nu2", "sigma11", "sigma22"};
  std::string detail = "mean |difference| vs sqrt(2) x ensemble std:";
  bool ok = uq.diverged.empty();
  for (int c = 0; c < 4; ++c) {
    detail += std::string(" ") + names[c] + " " + num(cmp.means(c)) + " < " + num(sd(c)) + ";";
    ok = ok && cmp.means(c) < sd(c);
  }
  return {ok, detail};
}

std::map<std::string, std::string> tree_hashes(const std::string& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).string();
    if (rel == "manifest.json") continue;
    out[rel] = hash_file(e.path().string());
  }
  return out;
}

const char* kTinyConfig =
    "trajectories_per_voltage = 2\nframes = 30\ncorpus_target = 100\nkm_anchors = 10\nkm_replicas = 5\n"
    "diff_anchors = 10\ndiff_replicas = 3\nnn_stage1_epochs = 3\nnn_stage2_epochs = 5\n"
    "param_stage1_epochs = 3\nparam_stage2_epochs = 3\nuq_models = 2\n"
    "compare_paths = 4\nparam_compare_paths = 2\ncompare_frames = 10\ninit_radius_min = 8.5\ninit_radius_max = 9\n";

Verdict determinism() {
  const std::string root = g_scratch + "/determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  io::write_file(root + "/tiny.cfg", kTinyConfig);
  const std::vector<std::string> stages{"simulate", "order-params", "featurize", "dmaps", "restrict", "fit-km",
                                        "fit-nn",   "integrate",    "free-energy", "compare", "uq", "report"};
  std::string detail;
  bool ok = true;
  std::map<std::string, std::string> first;
  for (const char* run : {"a", "b"}) {
    for (const auto& s : stages) {
      const std::string cmd = std::string(ESDE_CLI) + " --config " + root + "/tiny.cfg --seed 7 --out " + root + "/" +
                              run + " " + s + " > " + root + "/log.txt 2>&1";
      if (shell(cmd) != 0) return {false, "stage " + s + " failed: " + io::read_file(root + "/log.txt")};
    }
  }
  // Rerun every subcommand in place on the first tree.
  const auto before = tree_hashes(root + "/a");
  for (const auto& s : stages) {
    const std::string cmd = std::string(ESDE_CLI) + " --config " + root + "/tiny.cfg --seed 7 --out " + root +
                            "/a " + s + " > " + root + "/log.txt 2>&1";
    if (shell(cmd) != 0) return {false, "rerun of " + s + " failed"};
  }
  const auto again = tree_hashes(root + "/a");
  const auto other = tree_hashes(root + "/b");
  int differing = 0;
  for (const auto& [k, v] : before) {
    const auto b = other.find(k);
    const auto c = again.find(k);
    if (b == other.end() || b->second != v || c == again.end() || c->second != v) {
      if (differing < 5) detail += " " + k;
      ++differing;
    }
  }
  ok = differing == 0 && before.size() == other.size() && before.size() == again.size();
  return {ok, std::to_string(before.size()) + " artifacts over " + std::to_string(stages.size()) +
                  " subcommands; differing: " + std::to_string(differing) + detail};
}

Verdict end_to_end() {
  fs::remove_all(g_desk_dir);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string log = g_desk_dir + ".log";
  const int code = shell(std::string(ESDE_CLI) + " --out " + g_desk_dir + " all > " + log + " 2>&1");
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  if (code != 0) return {false, "pipeline exited with " + std::to_string(code) + ": " + io::read_file(log)};
  const std::vector<std::string> tables{
      "fig3_embedding", "fig4_drift", "fig5_diffusivity", "fig6_paths", "fig7_param_paths_v0",
      "fig7_param_paths_v1", "fig7_param_paths_v2", "fig7_param_paths_v3", "fig8_param_coefficients",
      "fig9_potential_v0", "fig9_potential_v1", "fig9_potential_v2", "fig9_potential_v3", "fig10_external"};
  std::string missing;
  for (const auto& t : tables) {
    const std::string path = g_desk_dir + "/report/" + t + ".txt";
    // Plots are named per quantity, so any graphic of the same figure counts.
    const std::string figure = t.substr(0, t.find('_') + 1);
    bool have_svg = false;
    if (fs::exists(g_desk_dir + "/report"))
      for (const auto& e : fs::directory_iterator(g_desk_dir + "/report"))
        have_svg |= e.path().extension() == ".svg" && e.path().filename().string().rfind(figure, 0) == 0;
    if (!fs::exists(path) || io::read_table(path).rows.empty()) missing += " " + t;
    else if (!have_svg) missing += " " + t + "(no graphic)";
  }
  const bool ok = minutes <= 30.0 && missing.empty();
  return {ok, "wall time " + num(minutes) + " min (limit 30); missing figure tables:" +
                  (missing.empty() ? std::string(" none") : missing)};
}

struct Criterion {
  const char* name;
  double limit_seconds;  // <= 0: no runtime bound beyond the criterion itself
  std::function<Verdict()> run;
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> c{
      {1, {"force correctness", 10, forces}},
      {2, {"free-diffusion physics", 30, free_diffusion}},
      {3, {"manifold recovery", 120, manifold_recovery}},
      {4, {"Nystrom round trip", 30, nystrom_round_trip}},
      {5, {"Kramers-Moyal oracle", 60, kramers_moyal_oracle}},
      {6, {"network SDE oracle", 300, nn_oracle}},
      {7, {"parameter monotonicity", 0, parameter_monotonicity}},
      {8, {"free-energy oracle", 30, free_energy_oracle}},
      {9, {"model comparison", 0, split_sample}},
      {10, {"determinism", 0, determinism}},
      {11, {"end-to-end pipeline", 0, end_to_end}},
  };
  return c;
}

bool run_one(int id) {
  const auto& c = criteria().at(id);
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = c.run();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (c.limit_seconds > 0 && secs > c.limit_seconds) {
    v.pass = false;
    v.detail += "; runtime over limit " + num(c.limit_seconds) + " s";
  }
  std::cout << "criterion " << id << " (" << c.name << "): " << (v.pass ? "PASS" : "FAIL") << " [" << num(secs)
            << " s] " << v.detail << std::endl;
  return v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--desk" && i + 1 < argc) {
      g_desk_dir = argv[++i];
    } else if (a == "--scratch" && i + 1 < argc) {
      g_scratch = argv[++i];
    } else if (a == "all") {
      for (const auto& [id, c] : criteria()) ids.push_back(id);
    } else {
      ids.push_back(std::stoi(a));
    }
  }
  if (ids.empty()) {
    std::cerr << "usage: acceptance [--desk DIR] [--scratch DIR] <criterion>... | all\n";
    return 64;
  }
  bool all = true;
  for (int id : ids) {
    if (!criteria().count(id)) {
      std::cerr << "unknown criterion " << id << "\n";
      return 64;
    }
    all = run_one(id) && all;
  }
  return all ? 0 : 1;
}
