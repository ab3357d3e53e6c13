#include "har/estimators.hpp"

#include <cmath>
#include <cstdio>

#include "har/errors.hpp"

namespace har {

OlsFit ols_fit(const SamplePath& sample) {
    const int T = sample.T();
    const int p = sample.p();
    if (T < p + 2) {
        throw Error(ErrorCode::InvalidSpec, "ols_fit: need T >= p + 2");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(sample.x,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(p - 1);
    if (!(smin > 1e-10 * smax)) {
        throw Error(ErrorCode::RankDeficient, "ols_fit: regressor matrix is rank deficient");
    }
    OlsFit fit;
    fit.beta = svd.solve(sample.y);
    fit.residuals = sample.y - sample.x * fit.beta;
    fit.score = sample.x.array().colwise() * fit.residuals.array();
    fit.qhat = (sample.x.transpose() * sample.x) / static_cast<double>(T);
    fit.partial_sums.resize(T, p);
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(p);
    for (int t = 0; t < T; ++t) {
        acc += fit.score.row(t);
        fit.partial_sums.row(t) = acc;
    }
    return fit;
}

Eigen::MatrixXd sample_autocov(const OlsFit& fit, int k) {
    const int T = fit.T();
    if (std::abs(k) > T - 1) {
        throw Error(ErrorCode::OutOfRange, "sample_autocov: |k| must be <= T - 1");
    }
    if (k < 0) return sample_autocov(fit, -k).transpose().eval();
    const int n = T - k;
    Eigen::MatrixXd g = fit.score.bottomRows(n).transpose() * fit.score.topRows(n);
    return g / static_cast<double>(T);
}

namespace {

bool compact_support(LagKernelId id) { return id != LagKernelId::QuadraticSpectral; }

// Shared lag loop: Gamma(0) + sum_k w_k (Gamma(k) + Gamma(k)').
Eigen::MatrixXd weighted_autocov_sum(const OlsFit& fit, const LagKernel& kernel,
                                     double lag_scale) {
    const int T = fit.T();
    Eigen::MatrixXd total = sample_autocov(fit, 0);
    for (int k = 1; k <= T - 1; ++k) {
        const double w = kernel.eval(lag_scale * static_cast<double>(k));
        if (w == 0.0 && compact_support(kernel.id)) break;
        if (w != 0.0) {
            const Eigen::MatrixXd g = sample_autocov(fit, k);
            total += w * (g + g.transpose());
        }
    }
    return total;
}

}  // namespace

LrvEstimate hac_lrv(const OlsFit& fit, const LagKernel& kernel, double b_T) {
    if (!(b_T > 0.0)) {
        throw Error(ErrorCode::OutOfRange, "hac_lrv: bandwidth must be positive");
    }
    return {weighted_autocov_sum(fit, kernel, b_T), LrvKind::Hac, kernel.id, b_T};
}

LrvEstimate fixed_b_lrv(const OlsFit& fit, const LagKernel& kernel, double b) {
    if (!(b > 0.0 && b <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "fixed_b_lrv: b must lie in (0,1]");
    }
    if (!kernel.psd) {
        throw Error(ErrorCode::NonPsdKernel,
                    std::string("fixed_b_lrv: kernel '") + kernel.name() +
                        "' is not positive semidefinite");
    }
    const double scale = 1.0 / (static_cast<double>(fit.T()) * b);
    return {weighted_autocov_sum(fit, kernel, scale), LrvKind::FixedB, kernel.id, b};
}

LrvEstimate bartlett_partial_sum_lrv(const OlsFit& fit) {
    const int T = fit.T();
    const int p = fit.p();
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
    for (int t = 0; t < T; ++t) {
        total.noalias() +=
            fit.partial_sums.row(t).transpose() * fit.partial_sums.row(t);
    }
    total *= 2.0 / (static_cast<double>(T) * static_cast<double>(T));
    return {total, LrvKind::FixedB, LagKernelId::Bartlett, 1.0};
}

namespace {

struct Window {
    int s_lo;  // 1-based, inclusive
    int s_hi;
};

// Observations s with K2(((m - (s - |k|/2)) / T) / h2) possibly nonzero.
Window window_bounds(int T, int m, int abs_k, double h2) {
    const double center = static_cast<double>(m) + 0.5 * static_cast<double>(abs_k);
    int lo = static_cast<int>(std::ceil(center - h2 * static_cast<double>(T)));
    int hi = static_cast<int>(std::floor(center));
    lo = std::max(lo, abs_k + 1);
    hi = std::min(hi, T);
    return {lo, hi};
}

double time_weight(const TimeKernel& k2, int T, int m, int abs_k, int s, double h2) {
    const double arg =
        ((static_cast<double>(m) - (static_cast<double>(s) - 0.5 * abs_k)) /
         static_cast<double>(T)) /
        h2;
    return k2.eval(arg);
}

}  // namespace

Eigen::MatrixXd local_autocov(const OlsFit& fit, double u, int k, double h2,
                              const TimeKernel& k2) {
    const int T = fit.T();
    const int p = fit.p();
    if (std::abs(k) >= T) {
        throw Error(ErrorCode::OutOfRange, "local_autocov: |k| must be < T");
    }
    if (!(u >= 0.0 && u <= 1.0) || !(h2 > 0.0 && h2 <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "local_autocov: u in [0,1], h2 in (0,1]");
    }
    const int abs_k = std::abs(k);
    const int m = static_cast<int>(std::floor(u * static_cast<double>(T)));
    const Window win = window_bounds(T, m, abs_k, h2);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p);
    for (int s = win.s_lo; s <= win.s_hi; ++s) {
        const double w = time_weight(k2, T, m, abs_k, s, h2);
        if (w == 0.0) continue;
        sum.noalias() +=
            w * (fit.score.row(s - 1).transpose() * fit.score.row(s - 1 - abs_k));
    }
    sum /= (static_cast<double>(T) * h2);
    if (k < 0) return sum.transpose().eval();
    return sum;
}

LocalLrvCurve local_lrv_curve(const OlsFit& fit, const Eigen::VectorXd& grid, double h1,
                              double h2, const LagKernel& k1, const TimeKernel& k2) {
    const int T = fit.T();
    const int p = fit.p();
    if (!(h1 > 0.0 && h1 <= 1.0) || !(h2 > 0.0 && h2 <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "local_lrv_curve: bandwidths must lie in (0,1]");
    }
    if (static_cast<double>(T) * h1 * h2 < 20.0) {
        std::fprintf(stderr,
                     "warning: local_lrv_curve: T*h1*h2 = %.2f is small; the curve "
                     "will be noisy\n",
                     static_cast<double>(T) * h1 * h2);
    }
    // Lag range: stop at the first zero weight for compact-support kernels.
    int k_max = T - 1;
    if (compact_support(k1.id)) {
        int k = 0;
        while (k + 1 <= T - 1 && k1.eval(h1 * static_cast<double>(k + 1)) != 0.0) ++k;
        k_max = k;
    }

    LocalLrvCurve curve;
    curve.grid = grid;
    curve.h1 = h1;
    curve.h2 = h2;
    curve.lag_kernel = k1.id;
    curve.time_kernel = k2.id;
    curve.omega.reserve(grid.size());
    curve.sigma.reserve(grid.size());

    for (int i = 0; i < grid.size(); ++i) {
        const double u = grid[i];
        if (!(u >= 0.0 && u <= 1.0)) {
            throw Error(ErrorCode::OutOfRange, "local_lrv_curve: grid point outside [0,1]");
        }
        const int m = static_cast<int>(std::floor(u * static_cast<double>(T)));
        Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(p, p);
        for (int k = 0; k <= k_max; ++k) {
            const double lag_w = k1.eval(h1 * static_cast<double>(k));
            if (lag_w == 0.0) continue;
            const Window win = window_bounds(T, m, k, h2);
            const int in_window = win.s_hi - win.s_lo + 1;
            if (k == 0 && in_window < 8) {
                throw Error(ErrorCode::DegenerateBandwidth,
                            "local_lrv_curve: fewer than 8 observations in the window at u=" +
                                std::to_string(u));
            }
            Eigen::MatrixXd num = Eigen::MatrixXd::Zero(p, p);
            double den = 0.0;
            for (int s = win.s_lo; s <= win.s_hi; ++s) {
                const double w = time_weight(k2, T, m, k, s, h2);
                if (w == 0.0) continue;
                num.noalias() +=
                    w * (fit.score.row(s - 1).transpose() * fit.score.row(s - 1 - k));
                den += w;
            }
            if (den <= 0.0) continue;
            num /= den;
            if (k == 0) {
                omega += num;
            } else {
                omega += lag_w * (num + num.transpose());
            }
        }
        // PSD projection so the square root exists.
        Eigen::MatrixXd omega_psd;
        if (p == 1) {
            omega_psd = omega.cwiseMax(0.0);
        } else {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                0.5 * (omega + omega.transpose()));
            const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
            omega_psd = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        }
        curve.omega.push_back(omega_psd);
        curve.sigma.push_back(matrix_sqrt_psd(omega_psd));
    }
    return curve;
}

Eigen::MatrixXd local_regressor_moment(const SamplePath& sample, double u, double h2,
                                       const TimeKernel& k2) {
    const int T = sample.T();
    const int p = sample.p();
    if (!(u >= 0.0 && u <= 1.0) || !(h2 > 0.0 && h2 <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "local_regressor_moment: u in [0,1], h2 in (0,1]");
    }
    const int m = static_cast<int>(std::floor(u * static_cast<double>(T)));
    const Window win = window_bounds(T, m, 0, h2);
    if (win.s_hi - win.s_lo + 1 < 8) {
        throw Error(ErrorCode::DegenerateBandwidth,
                    "local_regressor_moment: fewer than 8 observations in the window");
    }
    Eigen::MatrixXd num = Eigen::MatrixXd::Zero(p, p);
    double den = 0.0;
    for (int s = win.s_lo; s <= win.s_hi; ++s) {
        const double w = time_weight(k2, T, m, 0, s, h2);
        if (w == 0.0) continue;
        num.noalias() += w * (sample.x.row(s - 1).transpose() * sample.x.row(s - 1));
        den += w;
    }
    return num / den;
}

double default_h1(int T) {
    return std::min(1.0, 1.5 * std::pow(static_cast<double>(T), -0.2));
}

double default_h2(int T) {
    return std::min(1.0, std::pow(static_cast<double>(T), -1.0 / 6.0));
}

}  // namespace har
