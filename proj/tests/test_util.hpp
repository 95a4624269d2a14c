#pragma once

// Shared test-only oracles: chi-square goodness-of-fit against a log
// density, and a brute-force Student-t CDF by numerical integration. These
// stay independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "visim/quadrature.hpp"
#include "visim/special.hpp"

namespace visim::test {

/// Equal-probability bin edges on [-1, 1] for a (normalized) density given
/// in log form, via a fine trapezoid CDF.
inline std::vector<double> equal_probability_edges(
    const std::function<double(double)>& log_density, int bins) {
  constexpr int kGrid = 200001;
  std::vector<double> cdf(kGrid, 0.0), ts(kGrid);
  const double dt = 2.0 / (kGrid - 1);
  double prev = std::exp(log_density(-1.0 + 1e-12));
  ts[0] = -1.0;
  for (int i = 1; i < kGrid; ++i) {
    ts[i] = -1.0 + i * dt;
    const double cur = std::exp(log_density(std::min(1.0 - 1e-12, ts[i])));
    cdf[i] = cdf[i - 1] + 0.5 * (prev + cur) * dt;
    prev = cur;
  }
  const double total = cdf.back();
  std::vector<double> edges(bins + 1);
  edges[0] = -1.0;
  edges[bins] = 1.0;
  int grid = 0;
  for (int b = 1; b < bins; ++b) {
    const double target = total * b / bins;
    while (grid + 1 < kGrid && cdf[grid + 1] < target) ++grid;
    edges[b] = ts[grid];
  }
  return edges;
}

/// Chi-square p-value of samples against equal-probability bins.
inline double chi_square_p_value(const std::vector<double>& samples,
                                 const std::function<double(double)>& log_density,
                                 int bins = 50) {
  const std::vector<double> edges = equal_probability_edges(log_density, bins);
  std::vector<int> counts(bins, 0);
  for (double s : samples) {
    const int b = static_cast<int>(std::upper_bound(edges.begin() + 1, edges.end() - 1, s) -
                                   (edges.begin() + 1));
    counts[b]++;
  }
  const double expected = static_cast<double>(samples.size()) / bins;
  double stat = 0.0;
  for (int c : counts) stat += (c - expected) * (c - expected) / expected;
  return chi_square_sf(stat, bins - 1);
}

/// Student-t CDF by adaptive quadrature of the density (no incomplete beta).
inline double t_cdf_numeric(double x, double dof) {
  auto pdf = [dof](double u) {
    return std::exp(log_gamma(0.5 * (dof + 1.0)) - log_gamma(0.5 * dof) -
                    0.5 * std::log(dof * M_PI) -
                    0.5 * (dof + 1.0) * std::log1p(u * u / dof));
  };
  const double ax = std::fabs(x);
  // integrate pdf over [0, ax] with Gauss-Legendre, doubling until stable
  double prev = 0.0;
  for (int n = 64; n <= 4096; n *= 2) {
    const QuadratureRule& rule = QuadratureRule::gauss_legendre(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double u = 0.5 * ax * (rule.nodes[i] + 1.0);
      acc += rule.weights[i] * pdf(u);
    }
    acc *= 0.5 * ax;
    if (n > 64 && std::fabs(acc - prev) < 1e-12) {
      prev = acc;
      break;
    }
    prev = acc;
  }
  return x >= 0 ? 0.5 + prev : 0.5 - prev;
}

inline double welch_p_numeric(double t, double dof) {
  return 2.0 * (1.0 - t_cdf_numeric(std::fabs(t), dof));
}

}  // namespace visim::test
