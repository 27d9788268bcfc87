#include "esde/order_params.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace esde::order {
namespace {

std::vector<std::vector<int>> neighbor_lists(const Points& x, double cutoff) {
  const int n = static_cast<int>(x.rows());
  const double c2 = cutoff * cutoff;
  std::vector<std::vector<int>> nbr(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double dx = x(j, 0) - x(i, 0), dy = x(j, 1) - x(i, 1);
      const double d2 = dx * dx + dy * dy;
      if (d2 <= c2 && d2 > 0.0) {
        nbr[static_cast<std::size_t>(i)].push_back(j);
        nbr[static_cast<std::size_t>(j)].push_back(i);
      }
    }
  }
  return nbr;
}

std::vector<std::complex<double>> psi6_from(const Points& x,
                                            const std::vector<std::vector<int>>& nbr) {
  const int n = static_cast<int>(x.rows());
  std::vector<std::complex<double>> psi(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const auto& nj = nbr[static_cast<std::size_t>(j)];
    if (nj.empty()) continue;
    std::complex<double> acc = 0.0;
    for (int k : nj) {
      const double th = std::atan2(x(k, 1) - x(j, 1), x(k, 0) - x(j, 0));
      acc += std::polar(1.0, 6.0 * th);
    }
    psi[static_cast<std::size_t>(j)] = acc / static_cast<double>(nj.size());
  }
  return psi;
}

}  // namespace

double radius_of_gyration(const Points& x) {
  const auto n = x.rows();
  if (n < 1) throw DomainError("radius_of_gyration: empty configuration");
  const Eigen::RowVector2d mean = x.colwise().mean();
  return std::sqrt((x.rowwise() - mean).rowwise().squaredNorm().sum() / static_cast<double>(n));
}

double rg_hexagonal_reference(int n, double radius) {
  if (n < 1) throw DomainError("rg_hexagonal_reference: n must be >= 1");
  return radius * std::sqrt(std::sqrt(3.0) * n / std::numbers::pi);
}

std::vector<std::complex<double>> psi6_local(const Points& x, double neighbor_cutoff) {
  return psi6_from(x, neighbor_lists(x, neighbor_cutoff));
}

double psi6_global(const Points& x, double neighbor_cutoff) {
  if (x.rows() < 2) throw DomainError("psi6_global: need at least two particles");
  const auto psi = psi6_local(x, neighbor_cutoff);
  std::complex<double> acc = 0.0;
  for (const auto& v : psi) acc += v;
  return std::min(1.0, std::abs(acc / static_cast<double>(psi.size())));
}

std::vector<double> c6_local(const Points& x, double neighbor_cutoff, double coherence_threshold) {
  const auto nbr = neighbor_lists(x, neighbor_cutoff);
  const auto psi = psi6_from(x, nbr);
  const int n = static_cast<int>(x.rows());
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int j = 0; j < n; ++j) {
    const auto pj = psi[static_cast<std::size_t>(j)];
    const double aj = std::abs(pj);
    if (aj == 0.0) continue;
    int count = 0;
    for (int k : nbr[static_cast<std::size_t>(j)]) {
      const auto pk = psi[static_cast<std::size_t>(k)];
      const double ak = std::abs(pk);
      if (ak == 0.0) continue;
      if ((pj * std::conj(pk)).real() / (aj * ak) >= coherence_threshold) ++count;
    }
    out[static_cast<std::size_t>(j)] = std::min(count, 6) / 6.0;
  }
  return out;
}

double c6_ensemble(const Points& x, double neighbor_cutoff, double coherence_threshold) {
  if (x.rows() < 2) return 0.0;
  const auto c = c6_local(x, neighbor_cutoff, coherence_threshold);
  double s = 0.0;
  for (double v : c) s += v;
  return s / static_cast<double>(c.size());
}

OrderParams compute(const Points& x, const OrderSettings& s) {
  OrderParams o;
  o.rg = radius_of_gyration(x);
  if (x.rows() >= 2) {
    o.psi6 = psi6_global(x, s.neighbor_cutoff);
    o.c6 = c6_ensemble(x, s.neighbor_cutoff, s.coherence_threshold);
  }
  return o;
}

}  // namespace esde::order
