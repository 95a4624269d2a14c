#include "visim/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

#include "visim/special.hpp"

namespace visim {

namespace {

QuadratureRule build_gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    // Chebyshev-based initial guess, then Newton on P_n.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      const double dx = p0 / pp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

double log_sum_exp(const std::vector<double>& terms) {
  double m = -INFINITY;
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

// Int_{-1}^{1} f(t) (1-t^2)^{(d-3)/2} dt evaluated as
// Int_0^{pi} f(cos h) sin(h)^{d-2} dh. The angular form is smooth for every
// d >= 2, while the raw weight is endpoint-singular at d = 2.
double radial_weighted_integral(const std::function<double(double)>& f, int d,
                                const QuadratureRule& rule) {
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double theta = 0.5 * M_PI * (rule.nodes[i] + 1.0);
    const double t = std::cos(theta);
    const double ft = f(t);
    if (!std::isfinite(ft)) {
      std::ostringstream msg;
      msg << "integrate_radial_density: non-finite integrand at t = " << t;
      throw std::runtime_error(msg.str());
    }
    acc += rule.weights[i] * ft * std::pow(std::sin(theta), d - 2);
  }
  return acc * 0.5 * M_PI;
}

}  // namespace

const QuadratureRule& QuadratureRule::gauss_legendre(int n) {
  static std::map<int, QuadratureRule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_gauss_legendre(n)).first;
  return it->second;
}

double QuadratureRule::integrate(const std::function<double(double)>& f) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) acc += weights[i] * f(nodes[i]);
  return acc;
}

double detail::sphere_area_any(int d) {
  if (d < 1) throw std::domain_error("sphere_area: requires d >= 1");
  return std::exp(std::log(2.0) + 0.5 * d * std::log(M_PI) - log_gamma(0.5 * d));
}

double surface_area(int d) {
  if (d < 2) throw std::domain_error("surface_area: requires dimension d >= 2");
  return detail::sphere_area_any(d);
}

double integrate_radial_density(const std::function<double(double)>& f, int d,
                                const QuadratureRule& rule) {
  if (d < 2) throw std::domain_error("integrate_radial_density: requires d >= 2");
  return detail::sphere_area_any(d - 1) * radial_weighted_integral(f, d, rule);
}

double integrate_radial_density_adaptive(const std::function<double(double)>& f,
                                         int d, double tol) {
  double prev = integrate_radial_density(f, d, QuadratureRule::gauss_legendre(128));
  for (int n = 256; n <= (1 << 13); n *= 2) {
    const double cur = integrate_radial_density(f, d, QuadratureRule::gauss_legendre(n));
    if (std::fabs(cur - prev) <= tol * std::max(1.0, std::fabs(cur))) return cur;
    prev = cur;
  }
  throw std::runtime_error("integrate_radial_density_adaptive: quadrature did not converge");
}

double log_integrate_radial_kernel(const std::function<double(double)>& log_kernel,
                                   int d, double kappa_hint, double tol) {
  if (d < 2) throw std::domain_error("log_integrate_radial_kernel: requires d >= 2");
  const double p = 0.5 * (d - 3);
  const bool substitute = kappa_hint > 1e3;

  auto estimate = [&](int n) {
    const QuadratureRule& rule = QuadratureRule::gauss_legendre(n);
    std::vector<double> terms(rule.nodes.size());
    if (!substitute) {
      // angular form, log domain
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double theta = 0.5 * M_PI * (rule.nodes[i] + 1.0);
        const double t = std::cos(theta);
        const double lk = log_kernel(t);
        if (std::isnan(lk)) {
          std::ostringstream msg;
          msg << "log_integrate_radial_kernel: NaN kernel at t = " << t;
          throw std::runtime_error(msg.str());
        }
        terms[i] = lk + (d - 2) * std::log(std::sin(theta)) +
                   std::log(rule.weights[i] * 0.5 * M_PI);
      }
      return log_sum_exp(terms);
    }
    // Mass concentrates in a band of width O(1/kappa) at t = 1. Substitute
    // s = kappa (1 - t) and then s = q^2; the q-integrand carries the factor
    // q^{d-2}, smooth for every d >= 2. The tail above s = 500 is
    // e^{-s/2}-suppressed relative to the peak.
    const double kappa = kappa_hint;
    const double q_max = std::sqrt(std::min(2.0 * kappa, 500.0));
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double q = 0.5 * q_max * (rule.nodes[i] + 1.0);
      if (q == 0.0) {
        terms[i] = -INFINITY;
        continue;
      }
      const double t = 1.0 - q * q / kappa;
      const double lk = log_kernel(t);
      terms[i] = lk + (d - 2) * std::log(q) - 0.5 * (d - 1) * std::log(kappa) +
                 p * std::log(2.0 - q * q / kappa) + std::log(2.0) +
                 std::log(rule.weights[i] * 0.5 * q_max);
    }
    return log_sum_exp(terms);
  };

  double prev = estimate(128);
  for (int n = 256; n <= (1 << 13); n *= 2) {
    const double cur = estimate(n);
    if (std::fabs(cur - prev) <= tol) {
      return cur + std::log(detail::sphere_area_any(d - 1));
    }
    prev = cur;
  }
  throw std::runtime_error("log_integrate_radial_kernel: quadrature did not converge");
}

}  // namespace visim
