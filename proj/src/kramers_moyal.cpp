#include "esde/kramers_moyal.hpp"

#include "esde/io.hpp"
#include "esde/parallel.hpp"

#include <cmath>
#include <limits>

namespace esde::km {

PointEstimate km_point_estimate(std::span<const Vec2> endpoints, const Vec2& x0, double h) {
  if (endpoints.empty()) throw DomainError("km_point_estimate: empty burst");
  if (endpoints.size() < 2) throw DomainError("km_point_estimate: need at least two endpoints");
  if (!(h > 0)) throw DomainError("km_point_estimate: h must be > 0");
  Vec2 first = Vec2::Zero();
  Vec2 second = Vec2::Zero();
  for (const Vec2& e : endpoints) {
    const Vec2 d = e - x0;
    first += d;
    second += d.cwiseProduct(d);
  }
  const double n = static_cast<double>(endpoints.size());
  PointEstimate out;
  out.drift = first / (n * h);
  out.sigma = (second / (n * h)).cwiseSqrt();
  return out;
}

TabulatedModel::TabulatedModel(std::vector<Vec2> anchors, std::vector<PointEstimate> values)
    : anchors_(std::move(anchors)), values_(std::move(values)) {
  if (anchors_.empty()) throw DomainError("TabulatedModel: need at least one anchor");
  if (anchors_.size() != values_.size()) throw DomainError("TabulatedModel: size mismatch");
  for (const auto& v : values_) {
    if (!(v.sigma.array() >= 0).all()) throw DomainError("TabulatedModel: negative diffusivity");
  }
}

std::size_t TabulatedModel::nearest(const Vec2& x) const {
  if (anchors_.empty()) throw DomainError("TabulatedModel: empty model");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    const double d = (anchors_[i] - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Vec2 TabulatedModel::drift(const Vec2& x, double) const { return nn_evaluate(x).drift; }

Mat2 TabulatedModel::sigma(const Vec2& x, double) const {
  const Vec2 s = nn_evaluate(x).sigma;
  Mat2 m = Mat2::Zero();
  m(0, 0) = s.x();
  m(1, 1) = s.y();
  return m;
}

TabulatedModel km_field(const std::vector<Vec2>& anchors, const BurstFn& burst, int n_replicas,
                        double h) {
  if (anchors.empty()) throw DomainError("km_field: no anchors");
  std::vector<PointEstimate> values(anchors.size());
  parallel_for(static_cast<long long>(anchors.size()), [&](long long i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      const auto ends = burst(idx, anchors[idx], n_replicas, h);
      values[idx] = km_point_estimate(ends, anchors[idx], h);
    } catch (const std::exception& e) {
      throw NumericalError("km_field: anchor " + std::to_string(idx) + ": " + e.what());
    }
  });
  return TabulatedModel(anchors, std::move(values));
}

void write_model(const std::string& path, const TabulatedModel& m) {
  io::Table t;
  t.columns = {"phi1", "phi2", "nu1", "nu2", "sigma11", "sigma22"};
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& a = m.anchors()[i];
    const auto& v = m.values()[i];
    t.add_row({a.x(), a.y(), v.drift.x(), v.drift.y(), v.sigma.x(), v.sigma.y()});
  }
  io::write_table(path, t, "esde-km-model");
}

TabulatedModel read_model(const std::string& path) {
  const auto t = io::read_table(path);
  std::vector<Vec2> anchors;
  std::vector<PointEstimate> values;
  for (const auto& r : t.rows) {
    if (r.size() != 6) throw FormatError(path + ": expected 6 columns");
    anchors.emplace_back(r[0], r[1]);
    PointEstimate e;
    e.drift = Vec2(r[2], r[3]);
    e.sigma = Vec2(r[4], r[5]);
    values.push_back(e);
  }
  if (anchors.empty()) throw FormatError(path + ": empty model");
  return TabulatedModel(std::move(anchors), std::move(values));
}

}  // namespace esde::km
