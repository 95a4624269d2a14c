#pragma once

#include <functional>
#include <vector>

namespace visim {

/// Gauss-Legendre rule on (-1, 1). Exact for polynomials of degree 2n-1.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  static const QuadratureRule& gauss_legendre(int n);

  double integrate(const std::function<double(double)>& f) const;
};

/// Area of the unit sphere S^{d-1}: 2 pi^{d/2} / Gamma(d/2). d >= 2.
double surface_area(int d);

namespace detail {
// Same formula, additionally valid at d = 1 (|S^0| = 2). The radial
// integrals and the PS marginal need the area of S^{d-2}.
double sphere_area_any(int d);
}  // namespace detail

/// Integral over S^{d-1} of a density that depends on x only through
/// t = mu^T x:  surface_area(d-1) * Int_{-1}^{1} f(t) (1-t^2)^{(d-3)/2} dt.
/// Throws if f evaluates non-finite (the offending node is reported).
double integrate_radial_density(const std::function<double(double)>& f, int d,
                                const QuadratureRule& rule);

/// Node count doubles from 128 until successive estimates agree to tol.
double integrate_radial_density_adaptive(const std::function<double(double)>& f,
                                         int d, double tol = 1e-10);

/// log of the same sphere integral for a positive kernel given in log form:
/// log [ A_{d-1} * Int exp(log_kernel(t)) (1-t^2)^{(d-3)/2} dt ].
/// Runs in log domain (max-factored sums), so kernels like (1+t)^kappa with
/// kappa in the thousands neither overflow nor underflow. For kappa_hint
/// above 1e3 the integral is taken in the substituted variable
/// s = kappa_hint * (1 - t), which resolves the O(1/kappa)-wide mass
/// concentration near t = 1.
double log_integrate_radial_kernel(const std::function<double(double)>& log_kernel,
                                   int d, double kappa_hint, double tol = 1e-11);

}  // namespace visim
