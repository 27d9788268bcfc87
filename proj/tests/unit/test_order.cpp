#include "doctest.h"
#include "support.hpp"

#include "esde/order_params.hpp"

#include <cmath>

using namespace esde;
using esde::testing::hex_patch;
using esde::testing::random_points;
using esde::testing::rotation;
using esde::testing::square_patch;

namespace {

Points uniform_gas(int n, double half_width, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Points x(n, 2);
  for (int i = 0; i < n; ++i) x.row(i) << u(rng), u(rng);
  return x;
}

}  // namespace

TEST_CASE("radius of gyration") {
  CHECK(order::radius_of_gyration(Points::Constant(4, 2, 1.5)) == 0.0);
  Points pair(2, 2);
  pair << -1, 0, 1, 0;
  CHECK(order::radius_of_gyration(pair) == doctest::Approx(1.0).epsilon(1e-15));
  const Points x = random_points(25, 7.0, 0.1, 3);
  double mx = 0, my = 0;
  for (int i = 0; i < 25; ++i) mx += x(i, 0), my += x(i, 1);
  mx /= 25, my /= 25;
  double s = 0;
  for (int i = 0; i < 25; ++i) s += (x(i, 0) - mx) * (x(i, 0) - mx) + (x(i, 1) - my) * (x(i, 1) - my);
  CHECK(order::radius_of_gyration(x) == doctest::Approx(std::sqrt(s / 25)).epsilon(1e-12));
  CHECK(order::radius_of_gyration(2.5 * x) == doctest::Approx(2.5 * std::sqrt(s / 25)).epsilon(1e-12));
}

TEST_CASE("hexagonal order") {
  const Points hex = hex_patch(2.0, 9.0);
  CHECK(order::psi6_global(hex, 2.5) >= 0.99);
  CHECK(order::psi6_global(square_patch(2.0, 7), 2.5) <= 0.3);
  double mean = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) mean += order::psi6_global(uniform_gas(200, 39.6, s), 2.5);
  mean /= 100;
  CHECK(mean <= 0.2);
}

TEST_CASE("coherent neighbour fraction") {
  CHECK(order::c6_ensemble(Points::Zero(1, 2), 2.5, 0.32) == 0.0);
  const Points big = hex_patch(2.0, 40.0);
  const auto c6 = order::c6_local(big, 2.5, 0.32);
  double interior = 0.0;
  int n = 0;
  for (int i = 0; i < big.rows(); ++i)
    if (big.row(i).norm() < 36.0) interior += c6[static_cast<std::size_t>(i)], ++n;
  CHECK(interior / n == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(order::c6_ensemble(big, 2.5, 0.32) > 0.9);
  double gas = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) gas += order::c6_ensemble(uniform_gas(200, 39.6, s), 2.5, 0.32);
  CHECK(gas / 20 <= 0.1);
}

TEST_CASE("rigid-motion invariance and bounds") {
  const Points x = random_points(40, 9.0, 2.05, 8);
  Points moved = (x * rotation(0.77).transpose()).eval();
  moved.col(0).array() += 4.0;
  const auto a = order::compute(x);
  const auto b = order::compute(moved);
  CHECK(b.rg == doctest::Approx(a.rg).epsilon(1e-12));
  CHECK(b.psi6 == doctest::Approx(a.psi6).epsilon(1e-9));
  CHECK(b.c6 == doctest::Approx(a.c6).epsilon(1e-12));
  CHECK(a.psi6 >= 0.0);
  CHECK(a.psi6 <= 1.0);
  CHECK(a.c6 >= 0.0);
  CHECK(a.c6 <= 1.0);
}

TEST_CASE("close-packed reference radius") {
  CHECK(order::rg_hexagonal_reference(30) == doctest::Approx(std::sqrt(std::sqrt(3.0) * 30 / 3.141592653589793)));
}
