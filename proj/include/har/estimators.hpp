#pragma once

#include <Eigen/Dense>
#include <vector>

#include "har/dgp.hpp"
#include "har/kernels.hpp"

namespace har {

/// OLS fit together with everything the LRV estimators need: residuals,
/// score products V_t = x_t e_t, their partial sums S_t (S_T = 0 by the
/// normal equations) and Qhat = X'X / T.
struct OlsFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd residuals;
    Eigen::MatrixXd score;         // T x p
    Eigen::MatrixXd qhat;          // p x p
    Eigen::MatrixXd partial_sums;  // T x p, row t holds S_{t+1}

    int T() const { return static_cast<int>(score.rows()); }
    int p() const { return static_cast<int>(score.cols()); }
};

/// Throws RankDeficient when the smallest singular value of X falls below
/// 1e-10 times the largest.
OlsFit ols_fit(const SamplePath& sample);

/// Sample autocovariance of the score at lag k; transpose-mirrored for k < 0.
Eigen::MatrixXd sample_autocov(const OlsFit& fit, int k);

enum class LrvKind { Hac, FixedB };

struct LrvEstimate {
    Eigen::MatrixXd value;
    LrvKind kind;
    LagKernelId kernel;
    double bandwidth;  // b_T for HAC, b for fixed-b

    double scalar() const { return value(0, 0); }
};

/// Kernel-weighted autocovariance sum with weights K(b_T k). Single pass over
/// lags, exiting early once compact-support weights hit zero.
LrvEstimate hac_lrv(const OlsFit& fit, const LagKernel& kernel, double b_T);

/// Same sum with weights K(k / (T b)), b in (0,1] a fixed fraction of the
/// sample. Requires a psd kernel (Bartlett, Parzen, QS).
LrvEstimate fixed_b_lrv(const OlsFit& fit, const LagKernel& kernel, double b);

/// Bartlett b = 1 estimator in its partial-sum form 2 T^{-2} sum_t S_t S_t';
/// algebraically identical to fixed_b_lrv(Bartlett, 1) and O(T p^2).
LrvEstimate bartlett_partial_sum_lrv(const OlsFit& fit);

/// Local autocovariance at rescaled time u and lag k, smoothing over time
/// with a one-sided window of width h2. Paper normalization (T h2)^{-1}; the
/// curve assembly below renormalizes window weights instead.
Eigen::MatrixXd local_autocov(const OlsFit& fit, double u, int k, double h2,
                              const TimeKernel& k2);

struct LocalLrvCurve {
    Eigen::VectorXd grid;                 // u_i in [0,1]
    std::vector<Eigen::MatrixXd> omega;   // PSD-projected Omega(u_i)
    std::vector<Eigen::MatrixXd> sigma;   // PSD square roots
    std::vector<double> q;                // optional Q(u_i), scalar; empty if unset
    double h1 = 0.0;
    double h2 = 0.0;
    LagKernelId lag_kernel = LagKernelId::Bartlett;
    TimeKernelId time_kernel = TimeKernelId::Uniform;

    int points() const { return static_cast<int>(grid.size()); }
    int dim() const { return omega.empty() ? 0 : static_cast<int>(omega.front().rows()); }
    double omega_at(int i) const { return omega[i](0, 0); }
    double sigma_at(int i) const { return sigma[i](0, 0); }
};

/// Double-kernel local LRV curve: lag smoothing via K(h1 k), time smoothing
/// via the [0,1] kernel k2 with window weights renormalized to unit mass
/// (removes the O(1) edge bias where the window leaves the sample). Negative
/// eigenvalues are clipped so that sigma(u) always exists.
LocalLrvCurve local_lrv_curve(const OlsFit& fit, const Eigen::VectorXd& grid, double h1,
                              double h2, const LagKernel& k1, const TimeKernel& k2);

/// Kernel-weighted local second moment of the regressors, renormalized.
Eigen::MatrixXd local_regressor_moment(const SamplePath& sample, double u, double h2,
                                       const TimeKernel& k2);

// Default plug-in bandwidths, capped into (0,1].
double default_h1(int T);
double default_h2(int T);

}  // namespace har
