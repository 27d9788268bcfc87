#include "doctest.h"
#include "support.hpp"

#include "esde/dmaps.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

using namespace esde;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> ranks(const VecX& v) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v(a) < v(b); });
  std::vector<double> r(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
  return r;
}

double spearman(const VecX& a, const VecX& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(ra.size());
  const double mean = (n - 1) / 2;
  double num = 0, da = 0, db = 0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    num += (ra[k] - mean) * (rb[k] - mean);
    da += (ra[k] - mean) * (ra[k] - mean);
    db += (rb[k] - mean) * (rb[k] - mean);
  }
  return num / std::sqrt(da * db);
}

// Points on a unit circle at the given angles, embedded in 3-D.
MatX circle(const std::vector<double>& angles) {
  MatX f(static_cast<Eigen::Index>(angles.size()), 3);
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f(r, 0) = std::cos(angles[i]);
    f(r, 1) = std::sin(angles[i]);
    f(r, 2) = 0.0;
  }
  return f;
}

// Best orthogonal-plus-scale fit of b onto a; relative Frobenius residual.
double procrustes_residual(const MatX& a, const MatX& b) {
  const MatX ac = a.rowwise() - a.colwise().mean();
  const MatX bc = b.rowwise() - b.colwise().mean();
  Eigen::JacobiSVD<MatX> svd(bc.transpose() * ac, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const MatX r = svd.matrixU() * svd.matrixV().transpose();
  const double scale = svd.singularValues().sum() / bc.squaredNorm();
  return (scale * bc * r - ac).norm() / ac.norm();
}

}  // namespace

TEST_CASE("kernel") {
  MatX f(3, 2);
  f << 0, 0, 1, 1, 3, -2;
  const MatX a = dmaps::build_kernel(f, 0.5);
  for (int i = 0; i < 3; ++i) CHECK(a(i, i) == 1.0);
  CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const double eps = 0.7;
  MatX g(2, 4);
  g << 0, 0, 0, 0, std::sqrt(2 * eps), 0, 0, 0;
  CHECK(dmaps::build_kernel(g, eps)(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK_THROWS_AS(dmaps::build_kernel(g, 0.0), DomainError);
}

TEST_CASE("Markov normalization") {
  const MatX f = esde::testing::random_points(40, 2.0, 0.0, 4);
  const auto w = dmaps::normalize(dmaps::build_kernel(f, 0.3), 1.0);
  CHECK((w.markov.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(w.markov.minCoeff() >= 0.0);
  const auto one = dmaps::normalize(MatX::Ones(1, 1), 1.0);
  CHECK(one.markov(0, 0) == 1.0);
}

TEST_CASE("spectrum") {
  const MatX f = esde::testing::random_points(60, 2.0, 0.0, 5);
  const auto w = dmaps::normalize(dmaps::build_kernel(f, 0.5), 1.0);
  const auto e = dmaps::eigendecompose(w, 8);
  CHECK(e.values(0) == doctest::Approx(1.0).epsilon(1e-8));
  for (int k = 1; k < 8; ++k) {
    CHECK(e.values(k) <= e.values(k - 1));
    CHECK(std::abs(e.values(k)) <= 1.0 + 1e-12);
  }
  const VecX phi0 = e.vectors.col(0);
  CHECK((phi0.array() - phi0(0)).abs().maxCoeff() <= 1e-8 * std::abs(phi0(0)));
}

TEST_CASE("circle recovers the angle") {
  Rng rng = make_rng(11);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<double> angles(400);
  for (auto& a : angles) a = u(rng);
  MatX f = circle(angles);
  for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, 0) += noise(rng), f(i, 1) += noise(rng);
  const auto m = dmaps::build(f);
  CHECK(m.selection.indices[0] == 1);
  CHECK(m.selection.indices[1] == 2);
  const MatX e = m.embedding();
  double sa = 0, ca = 0, sb = 0, cb = 0;
  std::vector<double> rec(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    rec[i] = std::atan2(e(static_cast<Eigen::Index>(i), 1), e(static_cast<Eigen::Index>(i), 0));
    sa += std::sin(angles[i]), ca += std::cos(angles[i]);
    sb += std::sin(rec[i]), cb += std::cos(rec[i]);
  }
  const double ma = std::atan2(sa, ca), mb = std::atan2(sb, cb);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double x = std::sin(angles[i] - ma), y = std::sin(rec[i] - mb);
    num += x * y, da += x * x, db += y * y;
  }
  CHECK(std::abs(num / std::sqrt(da * db)) >= 0.99);
}

TEST_CASE("curve in ten dimensions") {
  const int n = 300;
  MatX f(n, 10);
  VecX s(n);
  Rng rng = make_rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    s(i) = u(rng);
    for (int d = 0; d < 10; ++d) f(i, d) = std::sin((d + 1) * 0.3 * s(i) + d);
  }
  dmaps::Settings st;
  st.require_selection = false;
  st.n_eigenpairs = 6;
  const auto m = dmaps::build(f, st);
  CHECK(std::abs(spearman(m.eigenvectors.col(1), s)) >= 0.99);
  CHECK_THROWS_AS(dmaps::select_nonharmonic(m.eigenvectors, m.eigenvalues), NumericalError);
  try {
    dmaps::select_nonharmonic(m.eigenvectors, m.eigenvalues);
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("residuals") != std::string::npos);
  }
}

TEST_CASE("strip selection skips the long-axis harmonic") {
  Rng rng = make_rng(13);
  std::uniform_real_distribution<double> ux(0.0, 2.5), uy(0.0, 1.0);
  MatX f(1200, 2);
  for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, 0) = ux(rng), f(i, 1) = uy(rng);
  dmaps::Settings st;
  st.epsilon = 0.01;
  const auto m = dmaps::build(f, st);
  CHECK(m.selection.indices[0] == 1);
  CHECK(m.selection.indices[1] == 3);
  CHECK(m.selection.residuals[2] < 0.2);
  CHECK(m.selection.residuals[3] > 0.8);
  CHECK(std::abs(spearman(m.eigenvectors.col(1), f.col(0))) > 0.99);
  CHECK(std::abs(spearman(m.eigenvectors.col(3), f.col(1))) > 0.95);
}

TEST_CASE("Nystrom extension") {
  Rng rng = make_rng(14);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  std::vector<double> angles(300);
  for (auto& a : angles) a = u(rng);
  const MatX f = circle(angles);
  const auto m = dmaps::build(f);
  const MatX e = m.embedding();
  SUBCASE("training points reproduce their embedding") {
    const MatX r = dmaps::nystrom_restrict_batch(m, f);
    CHECK((r - e).cwiseAbs().maxCoeff() <= 1e-6 * e.cwiseAbs().maxCoeff());
    const auto p = dmaps::nystrom_restrict(m, f.row(7).transpose());
    CHECK(p.phi1 == doctest::Approx(e(7, 0)).epsilon(1e-6));
  }
  SUBCASE("midpoint of neighbours stays in their box") {
    std::vector<std::size_t> order(angles.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return angles[a] < angles[b]; });
    for (std::size_t k = 0; k + 1 < order.size(); k += 25) {
      const auto i = static_cast<Eigen::Index>(order[k]), j = static_cast<Eigen::Index>(order[k + 1]);
      const VecX mid = 0.5 * (f.row(i) + f.row(j)).transpose();
      const auto p = dmaps::nystrom_restrict(m, mid);
      for (int d = 0; d < 2; ++d) {
        const double lo = std::min(e(i, d), e(j, d)), hi = std::max(e(i, d), e(j, d));
        const double pad = 0.1 * std::max(hi - lo, 1e-3 * e.col(d).cwiseAbs().maxCoeff());
        const double v = d == 0 ? p.phi1 : p.phi2;
        CHECK(v >= lo - pad);
        CHECK(v <= hi + pad);
      }
    }
  }
  SUBCASE("zero eigenvalue is rejected") {
    auto bad = m;
    bad.eigenvalues(bad.selection.indices[1]) = 0.0;
    CHECK_THROWS_AS(dmaps::nystrom_restrict(bad, f.row(0).transpose()), NumericalError);
  }
}

TEST_CASE("embedding does not depend on input order") {
  Rng rng = make_rng(15);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  std::vector<double> angles(200);
  for (auto& a : angles) a = u(rng);
  const MatX f = circle(angles);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(200);
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + 200, rng);
  const MatX g = perm * f;
  dmaps::Settings st;
  st.epsilon = 0.05;
  st.require_selection = false;
  st.n_eigenpairs = 2;
  const auto a = dmaps::build(f, st);
  const auto b = dmaps::build(g, st);
  const VecX pa = perm * a.eigenvectors.col(1);
  const VecX pb = b.eigenvectors.col(1);
  CHECK(std::min((pa - pb).cwiseAbs().maxCoeff(), (pa + pb).cwiseAbs().maxCoeff()) <= 1e-8);
}

TEST_CASE("density invariance on the circle") {
  Rng rng = make_rng(16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> uniform(1500), skewed;
  for (auto& a : uniform) a = 2 * kPi * u(rng);
  // Smooth sampling density exp(c cos a) with a 10:1 max/min ratio
  const double c = std::log(10.0) / 2;
  while (skewed.size() < 1500) {
    const double a = 2 * kPi * u(rng);
    if (u(rng) < std::exp(c * std::cos(a) - c)) skewed.push_back(a);
  }
  dmaps::Settings st;
  st.epsilon = 0.02;
  for (const auto* set : {&uniform, &skewed}) {
    const auto m = dmaps::build(circle(*set), st);
    MatX truth(static_cast<Eigen::Index>(set->size()), 2);
    for (std::size_t i = 0; i < set->size(); ++i)
      truth.row(static_cast<Eigen::Index>(i)) << std::cos((*set)[i]), std::sin((*set)[i]);
    CHECK(procrustes_residual(truth, m.embedding()) <= 0.05);
  }
}

TEST_CASE("lifting to the nearest training configuration") {
  MatX e(4, 2);
  e << 0, 0, 1, 0, 0, 1, 1, 1;
  const std::vector<int> configs{10, 11, 12, 13};
  CHECK(dmaps::lift_nearest(e, Vec2(1, 0), configs) == 11);
  CHECK(dmaps::lift_nearest(e, Vec2(50, 40), configs) == 13);
  CHECK(dmaps::lift_nearest(e, Vec2(0.5, 0.5), configs) == 10);
  Rng rng = make_rng(17);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int t = 0; t < 50; ++t) {
    const Vec2 q(n(rng), n(rng));
    std::size_t best = 0;
    for (std::size_t k = 1; k < 4; ++k)
      if ((e.row(static_cast<Eigen::Index>(k)).transpose() - q).norm() <
          (e.row(static_cast<Eigen::Index>(best)).transpose() - q).norm())
        best = k;
    CHECK(dmaps::nearest_index(e, q) == best);
  }
  CHECK_THROWS_AS(dmaps::lift_nearest(MatX(0, 2), Vec2(0, 0), std::vector<int>{}), DomainError);
}

TEST_CASE("model persistence") {
  const std::string dir = esde::testing::scratch_dir("dmaps_io");
  Rng rng = make_rng(18);
  std::uniform_real_distribution<double> u(0.0, 2 * kPi);
  std::vector<double> angles(100);
  for (auto& a : angles) a = u(rng);
  const MatX f = circle(angles);
  const auto m = dmaps::build(f);
  dmaps::save_model(dir + "/m.json", m);
  const auto r = dmaps::load_model(dir + "/m.json", f);
  CHECK(r.epsilon == m.epsilon);
  CHECK(r.eigenvalues == m.eigenvalues);
  CHECK(r.eigenvectors == m.eigenvectors);
  CHECK(r.selection.indices == m.selection.indices);
  MatX other = f;
  other(0, 0) += 1e-9;
  CHECK_THROWS_AS(dmaps::load_model(dir + "/m.json", other), FormatError);
}
