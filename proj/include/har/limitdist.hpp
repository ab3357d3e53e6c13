#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "har/dgp.hpp"
#include "har/estimators.hpp"
#include "har/kernels.hpp"
#include "har/paths.hpp"

namespace har {

/// Uniform partition of [0,1] into n subintervals; all functionals use
/// left-endpoint Riemann sums on the increments (Ito convention, so the
/// isometry checks hold without correction).
struct GridSpec {
    int n = 1000;

    void validate() const;
};

/// Discretized weighted Wiener path X(r_i) = sum_{j<=i} Sigma(u_j) dW_j at
/// r_i = i/n, with dW_j independent N(0, I/n).
struct WienerPath {
    int n = 0;
    Eigen::MatrixXd values;  // (n+1) x p, row i = X(i/n)'

    int dim() const { return static_cast<int>(values.cols()); }
};

WienerPath simulate_weighted_wiener(const VariancePath& sigma_path, GridSpec grid,
                                    std::uint64_t seed);

/// X(r) - (int_0^r Q) Qbar^{-1} X(1) on the grid. Pinned to zero at r = 1.
Eigen::MatrixXd bridge_functional(const WienerPath& path,
                                  const RegressorMomentPath& q_path);

// One draw of the limiting random matrix of the fixed-b LRV estimator, by
// construction route:
//  * second-derivative form  -(1/n^2) sum K_b''(r_i - s_j) H_i H_j'
//  * squared-bridge form     2 (1/n) sum H_i H_i'          (Bartlett)
//  * increment form          sum K_b(r_i - s_j) dB_i dB_j' (psd kernels)
Eigen::MatrixXd draw_lrv_limit_second_derivative_form(const LagKernel& kernel,
                                                      const VariancePath& sigma_path,
                                                      const RegressorMomentPath& q_path,
                                                      GridSpec grid, std::uint64_t seed);
Eigen::MatrixXd draw_lrv_limit_bartlett_form(const VariancePath& sigma_path,
                                             const RegressorMomentPath& q_path,
                                             GridSpec grid, std::uint64_t seed);
Eigen::MatrixXd draw_lrv_limit_increment_form(const BandwidthedKernel& kernel,
                                              const VariancePath& sigma_path,
                                              const RegressorMomentPath& q_path,
                                              GridSpec grid, std::uint64_t seed);

/// One draw of the limiting t (q = 1) or F statistic. Numerator and
/// denominator are functionals of the same Wiener path; under nonstationarity
/// they are dependent and must never come from independent draws.
double limit_t_draw(const LagKernel& kernel, double b, const VariancePath& sigma_path,
                    const RegressorMomentPath& q_path, const Eigen::MatrixXd& R,
                    GridSpec grid, std::uint64_t seed);
double limit_f_draw(const LagKernel& kernel, double b, const VariancePath& sigma_path,
                    const RegressorMomentPath& q_path, const Eigen::MatrixXd& R,
                    GridSpec grid, std::uint64_t seed);

/// A set of Monte Carlo draws of a limiting statistic, with enough metadata
/// to cache and reproduce it.
struct LimitDrawSet {
    std::vector<double> draws;
    std::string statistic = "t";  // "t", "F" or "lrv"
    LagKernelId kernel = LagKernelId::Bartlett;
    double b = 1.0;
    int grid_n = 0;
    std::uint64_t seed = 0;
    std::string sigma_source = "oracle";  // "oracle" or "plug-in"
    std::string q_source = "oracle";
    std::string curve_hash;

    std::vector<double> sorted() const;
    std::vector<double> sorted_abs() const;
};

/// reps independent draws of the limit t statistic (per-draw seeds derived
/// from `seed`, so the set is identical however draws are scheduled).
LimitDrawSet simulate_limit_t_draws(const LagKernel& kernel, double b,
                                    const VariancePath& sigma_path,
                                    const RegressorMomentPath& q_path,
                                    const Eigen::MatrixXd& R, GridSpec grid, int reps,
                                    std::uint64_t seed);

/// Same under stationarity (Sigma = I, Q = I): the pivotal fixed-b reference
/// distribution. statistic = "t" draws a scalar t; "F" draws the q-restriction
/// F limit.
LimitDrawSet simulate_stationary_pivotal_draws(const LagKernel& kernel, double b,
                                               const std::string& statistic, int q,
                                               GridSpec grid, int reps,
                                               std::uint64_t seed);

struct CriticalValueRow {
    double level = 0.0;
    double value = 0.0;
    double mc_se = 0.0;
};

struct CriticalValueTable {
    std::vector<CriticalValueRow> rows;
};

/// Empirical quantiles (type 7) of the draws at the given probability levels,
/// with order-statistic Monte Carlo standard errors. Input draws are used as
/// stored; pass the |t| transform for two-sided critical values.
CriticalValueTable critical_values(const std::vector<double>& draws,
                                   const std::vector<double>& levels);
CriticalValueTable critical_values(const LimitDrawSet& set,
                                   const std::vector<double>& levels);

/// Feasible critical-value generator: the limit t simulated with the
/// estimated curves step-interpolated onto the grid. Throws DegenerateCurve
/// when the curve is identically zero.
LimitDrawSet plug_in_limit_distribution(const LocalLrvCurve& curve,
                                        const std::vector<double>& q_curve,
                                        const LagKernel& kernel, double b, GridSpec grid,
                                        int reps, std::uint64_t seed);

/// Mean of the limiting fixed-b matrix (p = 1):
/// int_0^1 Kb*(s, s) Omega(s) ds by adaptive quadrature (abs tol 1e-8).
double fixed_b_limit_mean(const BandwidthedKernel& kernel, const VariancePath& omega_path);

/// m-th cumulant (m = 2..4) of Omega^{-1}(limit - mean) via cyclic tensor
/// quadrature of the demeaned-kernel product, on fixed grids of 200 / 80 / 40
/// points per dimension. grid_scale multiplies the grid for convergence
/// checks (the quadrature bias falls off quadratically).
double limit_cumulant(const BandwidthedKernel& kernel, const VariancePath& omega_path,
                      int m, int grid_scale = 1);

/// Finite-sample counterparts from the T x T autocovariance matrix of the
/// score: trace formula for the cumulants of the studentization ratio.
/// m = 1 returns 0 by construction. Dense; capped at T <= 2000.
double finite_sample_cumulant(const DgpSpec& spec, int T, const BandwidthedKernel& kernel,
                              int m);
double finite_sample_mean(const DgpSpec& spec, int T, const BandwidthedKernel& kernel);

/// Truncated series approximation of P(|limit t| <= z) in the central case:
/// chi-square(1) cdf at the mean plus derivative terms weighted by the
/// centered moments (terms m = 2 .. m_max + 1). The bandwidth bound
/// b < 1 / (16 max{C_Omega,1} int|K|) guarantees the series is dominated; set
/// enforce_b_bound = false to evaluate the truncation outside that region.
double expansion_two_sided_prob(const BandwidthedKernel& kernel,
                                const VariancePath& omega_path, double z, int m_max = 3,
                                bool enforce_b_bound = true);

/// Moment / cumulant summary used by reports and tests.
struct MomentReport {
    double mean = 0.0;                      // E of the limit matrix (p = 1)
    std::map<int, double> kappa;            // asymptotic cumulants
    std::map<int, double> xi;               // centered moments from kappa
    std::map<int, double> kappa_bound;      // 2^m (m-1)! Omega^-m C^m (4 int|K| b)^{m-1}
    std::optional<double> finite_T_mean;
    std::map<int, double> finite_T_kappa;
};

MomentReport moment_report(const BandwidthedKernel& kernel, const VariancePath& omega_path,
                           int m_max = 4, const DgpSpec* finite_spec = nullptr, int T = 0);

/// Centered moments from cumulants: xi_2 = k2, xi_3 = k3, xi_4 = k4 + 3 k2^2.
double xi_from_cumulants(const std::map<int, double>& kappa, int m);

}  // namespace har
