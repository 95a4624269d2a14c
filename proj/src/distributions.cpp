#include "visim/distributions.hpp"

#include <cmath>
#include <stdexcept>

#include "visim/quadrature.hpp"
#include "visim/special.hpp"

namespace visim {

namespace {

constexpr double kAntipodalEps = 1e-12;

void check_kappa(double kappa, double limit) {
  if (!std::isfinite(kappa) || kappa < 0.0)
    throw std::domain_error("kappa must be finite and non-negative");
  if (kappa > limit)
    throw std::domain_error("kappa outside the supported regime");
}

}  // namespace

SphericalParams::SphericalParams(UnitVector mean, double concentration)
    : mu(std::move(mean)), kappa(concentration) {
  if (mu.dim() < 2)
    throw std::invalid_argument("SphericalParams: dimension must be >= 2");
  check_kappa(kappa, kKappaMax);
}

PowerSpherical::PowerSpherical(UnitVector mu, double kappa)
    : params_(std::move(mu), kappa),
      log_normalizer_(ps_log_normalizer(params_.mu.dim(), kappa)) {}

VonMisesFisher::VonMisesFisher(UnitVector mu, double kappa)
    : params_(std::move(mu), kappa) {}

double ps_log_normalizer(int d, double kappa) {
  if (d < 2) throw std::domain_error("ps_log_normalizer: requires d >= 2");
  check_kappa(kappa, 1e7);
  const double beta = 0.5 * (d - 1);
  const double alpha = beta + kappa;
  return -((alpha + beta) * std::log(2.0) + beta * std::log(M_PI) +
           log_gamma(alpha) - log_gamma(alpha + beta));
}

double ps_log_prob(const PowerSpherical& dist, const UnitVector& z) {
  if (z.dim() != dist.dim())
    throw std::invalid_argument("ps_log_prob: dimension mismatch");
  const double t = dist.mu().dot(z);
  const double one_plus = std::fmax(1.0 + t, kAntipodalEps);
  return dist.log_normalizer() + dist.kappa() * std::log(one_plus);
}

UnitVector ps_sample(const PowerSpherical& dist, SeededRng& rng) {
  const int d = dist.dim();
  const double b = sample_beta(dist.alpha(), dist.beta(), rng);
  const double t = 2.0 * b - 1.0;
  const std::vector<double> v = uniform_direction(d - 1, rng);
  std::vector<double> y(d);
  y[0] = t;
  const double scale = std::sqrt(std::fmax(0.0, 1.0 - t * t));
  for (int i = 1; i < d; ++i) y[i] = scale * v[i - 1];
  return householder_reflect(UnitVector(std::move(y)), dist.mu());
}

double ps_marginal_t_log_density(const PowerSpherical& dist, double t) {
  if (std::fabs(t) > 1.0)
    throw std::domain_error("ps_marginal_t_log_density: requires |t| <= 1");
  const int d = dist.dim();
  const double p = 0.5 * (d - 3);
  const double one_plus = std::fmax(1.0 + t, kAntipodalEps);
  double lp = dist.log_normalizer() + dist.kappa() * std::log(one_plus) +
              std::log(detail::sphere_area_any(d - 1));
  if (p != 0.0) {
    double one_minus_sq = 1.0 - t * t;
    if (p < 0.0) one_minus_sq = std::fmax(one_minus_sq, kAntipodalEps);
    lp += p * std::log(one_minus_sq);
  }
  return lp;
}

double vmf_log_prob_unnormalized(const VonMisesFisher& dist, const UnitVector& z) {
  if (z.dim() != dist.dim())
    throw std::invalid_argument("vmf_log_prob_unnormalized: dimension mismatch");
  return dist.kappa() * dist.mu().dot(z);
}

double vmf_log_normalizer_oracle(int d, double kappa) {
  if (d < 2) throw std::domain_error("vmf_log_normalizer_oracle: requires d >= 2");
  check_kappa(kappa, kKappaMax);
  return -log_integrate_radial_kernel(
      [kappa](double t) { return kappa * t; }, d, kappa);
}

double ps_log_normalizer_quadrature_oracle(int d, double kappa) {
  if (d < 2) throw std::domain_error("ps oracle: requires d >= 2");
  check_kappa(kappa, kKappaMax);
  return log_integrate_radial_kernel(
      [kappa](double t) {
        return kappa * std::log(std::fmax(1.0 + t, kAntipodalEps));
      },
      d, kappa);
}

double sample_gamma(double shape, SeededRng& rng) {
  if (!(shape > 0.0)) throw std::domain_error("sample_gamma: requires shape > 0");
  if (shape < 1.0) {
    // boost: Gamma(a) = Gamma(a+1) * U^{1/a}
    const double u = 1.0 - rng.uniform();  // (0, 1]
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - rng.uniform();  // (0, 1]
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double sample_beta(double a, double b, SeededRng& rng) {
  const double x = sample_gamma(a, rng);
  const double y = sample_gamma(b, rng);
  return x / (x + y);
}

}  // namespace visim
