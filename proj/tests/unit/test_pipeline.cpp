#include "doctest.h"
#include "support.hpp"

#include "esde/io.hpp"
#include "esde/pipeline.hpp"

#include <cmath>
#include <map>

using namespace esde;

TEST_CASE("uniform subsampling caps every histogram bin") {
  Rng rng = make_rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> rg, psi;
  for (int i = 0; i < 5000; ++i) {
    rg.push_back(1.0 + 0.1 * std::abs(z(rng)));
    psi.push_back(std::pow(u(rng), 4.0));
  }
  for (std::size_t target : {50u, 400u, 1500u, 10000u}) {
    int cap = 0;
    const auto kept = pipeline::subsample_uniform(rg, psi, 20, target, &cap);
    std::map<int, int> full, sub;
    const double lo = *std::min_element(rg.begin(), rg.end());
    const double span = *std::max_element(rg.begin(), rg.end()) - lo;
    auto bin = [&](std::size_t i) {
      const int a = std::clamp(static_cast<int>((rg[i] - lo) / span * 20), 0, 19);
      const int b = std::clamp(static_cast<int>(psi[i] * 20), 0, 19);
      return a * 20 + b;
    };
    for (std::size_t i = 0; i < rg.size(); ++i) ++full[bin(i)];
    for (auto i : kept) ++sub[bin(i)];
    for (const auto& [b, n] : sub) {
      CHECK(n <= cap);
      CHECK(n <= full[b]);
    }
    CHECK(kept.size() >= std::min<std::size_t>(target, rg.size()));
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    if (target < rg.size()) {
      std::size_t smaller = 0;
      for (const auto& [b, n] : full) smaller += std::min(n, cap - 1);
      CHECK(smaller < target);
    }
  }
}

TEST_CASE("path statistics") {
  SUBCASE("one path is its own envelope") {
    const std::vector<std::vector<Vec2>> one{{{0, 0}, {0.1, 0.2}, {0.3, -0.1}}};
    const auto s = pipeline::path_statistics(one, 0.5);
    for (Eigen::Index k = 0; k < 3; ++k)
      for (int d = 0; d < 2; ++d) {
        CHECK(s.mean(k, d) == one[0][static_cast<std::size_t>(k)](d));
        CHECK(s.lo(k, d) == s.mean(k, d));
        CHECK(s.hi(k, d) == s.mean(k, d));
      }
    CHECK(s.t[2] == 1.0);
  }
  SUBCASE("envelopes contain the mean") {
    Rng rng = make_rng(2);
    std::normal_distribution<double> z(0.0, 1e-3);
    std::vector<std::vector<Vec2>> paths(7);
    for (auto& p : paths)
      for (int k = 0; k < 50; ++k) p.emplace_back(0.1 + z(rng), 1e8 + 1e4 * z(rng));
    const auto s = pipeline::path_statistics(paths, 1.0);
    CHECK((s.mean.array() >= s.lo.array()).all());
    CHECK((s.mean.array() <= s.hi.array()).all());
  }
}

TEST_CASE("model rollouts") {
  SUBCASE("still model and still data") {
    const sde::LinearModel still(Mat2::Zero(), Mat2::Zero());
    const std::vector<std::vector<Vec2>> bd(3, std::vector<Vec2>(11, Vec2(0.2, 0.4)));
    const auto c = pipeline::compare_paths({{"m", &still}}, bd, 5, Vec2(0.2, 0.4), 1.0, 10, 0.0, 3);
    REQUIRE(c.labels == std::vector<std::string>{"bd", "m"});
    for (const auto& s : c.stats) {
      CHECK((s.hi - s.lo).cwiseAbs().maxCoeff() == 0.0);
      CHECK((s.mean.col(0).array() == 0.2).all());
    }
  }
  SUBCASE("Ornstein-Uhlenbeck mean decay") {
    const sde::LinearModel ou(-Mat2::Identity(), 0.5 * Mat2::Identity());
    const int n = 2000;
    const auto c = pipeline::compare_paths({{"ou", &ou}}, {}, n, Vec2(1.0, -1.0), 0.01, 100, 0.0, 4);
    const auto& s = c.stats[0];
    for (Eigen::Index k = 10; k <= 100; k += 10) {
      const double t = 0.01 * static_cast<double>(k);
      const double sd = 0.5 * std::sqrt((1.0 - std::exp(-2.0 * t)) / 2.0);
      CHECK(std::abs(s.mean(k, 0) - std::exp(-t)) <= 3.0 * sd / std::sqrt(n));
      CHECK(s.mean(k, 0) >= s.lo(k, 0));
      CHECK(s.mean(k, 0) <= s.hi(k, 0));
    }
  }
  SUBCASE("bad arguments") {
    const sde::LinearModel ou(-Mat2::Identity(), Mat2::Identity());
    CHECK_THROWS_AS(pipeline::compare_paths({{"ou", &ou}}, {}, 0, Vec2::Zero(), 0.1, 10, 0.0, 1), DomainError);
  }
  SUBCASE("table layout") {
    const std::string dir = esde::testing::scratch_dir("paths");
    const sde::LinearModel ou(-Mat2::Identity(), Mat2::Identity());
    const auto c = pipeline::compare_paths({{"a", &ou}, {"b", &ou}}, {}, 3, Vec2::Zero(), 0.1, 4, 0.0, 1);
    pipeline::write_path_table(dir + "/p.txt", c);
    const auto t = io::read_table(dir + "/p.txt");
    CHECK(t.columns.size() == 13);
    CHECK(t.columns[1] == "a_phi1_mean");
    CHECK(t.rows.size() == 5);
  }
}

TEST_CASE("configuration") {
  SUBCASE("round trip") {
    auto kv = KeyValueConfig::parse("frames = 17\nvoltages = 0.5, 0.8\ndrift_stride = 1, 2\nseed = 9\n");
    const auto cfg = pipeline::PipelineConfig::from_config(kv);
    CHECK(cfg.frames == 17);
    CHECK(cfg.voltages == std::vector<double>{0.5, 0.8});
    CHECK(cfg.seed == 9);
    const auto again = pipeline::PipelineConfig::from_config(cfg.to_config());
    CHECK(again.hash() == cfg.hash());
    CHECK(again.to_config().canonical() == cfg.to_config().canonical());
  }
  SUBCASE("every resolved key is documented") {
    const auto& ref = pipeline::PipelineConfig::reference();
    const auto resolved = pipeline::PipelineConfig{}.to_config();
    for (const auto& [key, value] : resolved.values()) {
      bool documented = false;
      for (const auto& r : ref) documented |= r.first == key;
      CHECK_MESSAGE(documented, key);
    }
  }
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(pipeline::PipelineConfig::from_config(KeyValueConfig::parse("framez = 3\n")), FormatError);
  }
  SUBCASE("invalid values are rejected") {
    CHECK_THROWS_AS(pipeline::PipelineConfig::from_config(KeyValueConfig::parse("frames = 0\n")), DomainError);
    CHECK_THROWS_AS(pipeline::PipelineConfig::from_config(KeyValueConfig::parse("frames = ten\n")), FormatError);
    CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), FormatError);
  }
  SUBCASE("the hash follows the values") {
    pipeline::PipelineConfig a, b;
    b.seed = a.seed + 1;
    CHECK(a.hash() != b.hash());
  }
}

TEST_CASE("stages are listed in execution order") {
  const auto& s = pipeline::stages();
  REQUIRE(s.size() == 12);
  CHECK(s.front() == "simulate");
  CHECK(s.back() == "report");
}

TEST_CASE("missing inputs are a domain error") {
  const std::string dir = esde::testing::scratch_dir("missing");
  CHECK_THROWS_AS(pipeline::run_stage("dmaps", pipeline::PipelineConfig{}, dir), DomainError);
  CHECK_THROWS_AS(pipeline::run_stage("nonsense", pipeline::PipelineConfig{}, dir), DomainError);
}
