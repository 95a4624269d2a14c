#pragma once

#include "visim/rng.hpp"
#include "visim/sphere.hpp"

namespace visim {

/// Mean direction and concentration of a spherical distribution.
struct SphericalParams {
  UnitVector mu;
  double kappa;

  SphericalParams(UnitVector mean, double concentration);
};

// Density C(kappa) (1 + mu^T z)^kappa on S^{d-1}. alpha and beta are the
// shape parameters of the Beta marginal driving the sampler.
class PowerSpherical {
 public:
  PowerSpherical(UnitVector mu, double kappa);

  int dim() const { return params_.mu.dim(); }
  double kappa() const { return params_.kappa; }
  const UnitVector& mu() const { return params_.mu; }
  double alpha() const { return 0.5 * (dim() - 1) + params_.kappa; }
  double beta() const { return 0.5 * (dim() - 1); }
  double log_normalizer() const { return log_normalizer_; }

  /// E[mu^T x] = (alpha - beta) / (alpha + beta).
  double mean_cosine() const { return (alpha() - beta()) / (alpha() + beta()); }

 private:
  SphericalParams params_;
  double log_normalizer_;
};

class VonMisesFisher {
 public:
  VonMisesFisher(UnitVector mu, double kappa);

  int dim() const { return params_.mu.dim(); }
  double kappa() const { return params_.kappa; }
  const UnitVector& mu() const { return params_.mu; }

 private:
  SphericalParams params_;
};

/// log C(kappa) of the PS density:
/// -[(alpha+beta) log 2 + beta log pi + logGamma(alpha) - logGamma(alpha+beta)].
double ps_log_normalizer(int d, double kappa);

/// log C + kappa * log(1 + mu^T z), the inner product clamped to
/// >= -1 + 1e-12 before the log so antipodal inputs stay finite.
double ps_log_prob(const PowerSpherical& dist, const UnitVector& z);

/// Draw: b ~ Beta(alpha, beta), t = 2b - 1, v uniform on S^{d-2},
/// y = (t, sqrt(1-t^2) v), then reflect e_1 onto mu.
UnitVector ps_sample(const PowerSpherical& dist, SeededRng& rng);

/// Log density of t = mu^T x under the PS distribution (sampler oracle).
double ps_marginal_t_log_density(const PowerSpherical& dist, double t);

/// kappa * mu^T z; the normalizer is deliberately omitted (the constant-
/// kappa objective never needs it).
double vmf_log_prob_unnormalized(const VonMisesFisher& dist, const UnitVector& z);

/// -log of the quadrature integral of the exp(kappa t) kernel; a numerical
/// stand-in for the Bessel-function normalizer, used only by tests.
double vmf_log_normalizer_oracle(int d, double kappa);

/// log of the quadrature integral of the PS kernel (1+t)^kappa over the
/// sphere; the independent oracle that ps_log_normalizer is checked against.
double ps_log_normalizer_quadrature_oracle(int d, double kappa);

// Variate samplers (Marsaglia-Tsang for Gamma; Beta as a two-Gamma ratio).
double sample_gamma(double shape, SeededRng& rng);
double sample_beta(double a, double b, SeededRng& rng);

/// Supported concentration range for distribution objects.
inline constexpr double kKappaMax = 1e5;

}  // namespace visim
