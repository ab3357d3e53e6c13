#pragma once

#include <functional>
#include <vector>

namespace har {

/// Adaptive Simpson integration of f on [a, b] to absolute tolerance tol.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol);

/// Same, but the integrand is split at the given interior points first
/// (used for piecewise integrands whose kinks are known).
double integrate_piecewise(const std::function<double(double)>& f, double a,
                           double b, const std::vector<double>& split_points,
                           double tol);

// Standard normal.
double normal_cdf(double x);
double normal_quantile(double p);

// Regularized lower incomplete gamma P(a, x) and chi-square(df).
double gamma_p(double a, double x);
double chi_square_cdf(double x, double df);
double chi_square_quantile(double p, double df);

/// cdf of chi-square with 1 degree of freedom and its first four derivatives.
/// Order 0 is the cdf itself; orders 1..4 are d^m/dx^m, valid for x > 0.
double chi1_cdf_derivative(double x, int order);

/// Empirical quantile, type-7 (linear interpolation of order statistics).
/// `sorted` must be ascending.
double quantile_type7(const std::vector<double>& sorted, double p);

/// Monte Carlo standard error of an empirical quantile via the
/// binomial/order-statistic delta method: half the spread of the order
/// statistics one binomial standard deviation of rank away.
double quantile_mc_se(const std::vector<double>& sorted, double p);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b);

}  // namespace har
