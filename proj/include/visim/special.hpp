#pragma once

// Scalar special functions shared by the spherical normalizers and the
// statistics code. log_gamma is a Lanczos approximation (g = 7, 9 terms),
// relative accuracy better than 1e-13 on [0.5, 1e7].

namespace visim {

double log_gamma(double x);

/// d/dx log_gamma. Recurrence below 10, asymptotic series above.
double digamma(double x);

double log_beta(double a, double b);

/// Regularized incomplete beta I_x(a, b), modified Lentz continued fraction.
double reg_incomplete_beta(double x, double a, double b);

/// Regularized lower incomplete gamma P(a, x).
double reg_lower_incomplete_gamma(double a, double x);

/// Survival function of the chi-square distribution with dof degrees.
double chi_square_sf(double x, double dof);

/// Two-sided p-value of a Student-t statistic with dof degrees of freedom.
double student_t_two_sided_p(double t, double dof);

}  // namespace visim
