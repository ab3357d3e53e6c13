#include "har/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "har/numeric.hpp"

namespace har {

void HypothesisSpec::validate(int p) const {
    if (R.cols() != p) {
        throw Error(ErrorCode::OutOfRange, "hypothesis R has wrong column count");
    }
    if (r.size() != R.rows()) {
        throw Error(ErrorCode::OutOfRange, "hypothesis r has wrong length");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
    const int q = static_cast<int>(R.rows());
    if (q < 1 || q > p ||
        !(svd.singularValues()(q - 1) > 1e-12 * svd.singularValues()(0))) {
        throw Error(ErrorCode::OutOfRange, "hypothesis R must have full row rank");
    }
}

const char* stat_kind_name(StatKind k) {
    switch (k) {
        case StatKind::TFixedB: return "t-fixed-b";
        case StatKind::FFixedB: return "f-fixed-b";
        case StatKind::THac: return "t-hac";
    }
    return "?";
}

const char* cv_source_name(CvSource s) {
    switch (s) {
        case CvSource::Standard: return "standard";
        case CvSource::StationaryPivotal: return "stationary-pivotal";
        case CvSource::NonstationaryPlugIn: return "plug-in";
    }
    return "?";
}

StatKind stat_kind_from_name(const std::string& name) {
    if (name == "t-fixed-b") return StatKind::TFixedB;
    if (name == "f-fixed-b") return StatKind::FFixedB;
    if (name == "t-hac") return StatKind::THac;
    throw Error(ErrorCode::UsageError, "unknown statistic kind: " + name);
}

CvSource cv_source_from_name(const std::string& name) {
    if (name == "standard") return CvSource::Standard;
    if (name == "stationary-pivotal") return CvSource::StationaryPivotal;
    if (name == "plug-in" || name == "nonstationary-plug-in") {
        return CvSource::NonstationaryPlugIn;
    }
    throw Error(ErrorCode::UsageError, "unknown critical value source: " + name);
}

namespace {

// R Qhat^{-1} Omega Qhat^{-1} R' for the studentized statistics.
Eigen::MatrixXd sandwich(const OlsFit& fit, const HypothesisSpec& hyp,
                         const Eigen::MatrixXd& omega) {
    const Eigen::MatrixXd rq = hyp.R * fit.qhat.ldlt().solve(
                                            Eigen::MatrixXd::Identity(fit.p(), fit.p()));
    return rq * omega * rq.transpose();
}

double t_from_lrv(const OlsFit& fit, const HypothesisSpec& hyp,
                  const Eigen::MatrixXd& omega) {
    hyp.validate(fit.p());
    if (hyp.q() != 1) {
        throw Error(ErrorCode::OutOfRange, "t statistic needs a single restriction");
    }
    const double num = std::sqrt(static_cast<double>(fit.T())) *
                       ((hyp.R * fit.beta)(0) - hyp.r(0));
    const double den2 = sandwich(fit, hyp, omega)(0, 0);
    const double scale =
        (omega.cwiseAbs().maxCoeff() + 1e-300) *
        (hyp.R * fit.qhat.ldlt().solve(Eigen::MatrixXd::Identity(fit.p(), fit.p())))
            .squaredNorm();
    if (!(den2 > 1e-14 * scale)) {
        throw Error(ErrorCode::DegenerateVariance, "studentization variance is degenerate");
    }
    return num / std::sqrt(den2);
}

}  // namespace

double t_stat_fixed_b(const OlsFit& fit, const HypothesisSpec& hyp, const LagKernel& kernel,
                      double b) {
    // Bartlett with b = 1 admits the O(T) partial-sum form of the same sum.
    const LrvEstimate omega = (kernel.id == LagKernelId::Bartlett && b == 1.0)
                                  ? bartlett_partial_sum_lrv(fit)
                                  : fixed_b_lrv(fit, kernel, b);
    return t_from_lrv(fit, hyp, omega.value);
}

double f_stat_fixed_b(const OlsFit& fit, const HypothesisSpec& hyp, const LagKernel& kernel,
                      double b) {
    hyp.validate(fit.p());
    const LrvEstimate omega = (kernel.id == LagKernelId::Bartlett && b == 1.0)
                                  ? bartlett_partial_sum_lrv(fit)
                                  : fixed_b_lrv(fit, kernel, b);
    const Eigen::MatrixXd mid = sandwich(fit, hyp, omega.value);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mid);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    if (!(emin > 0.0) || emax / emin > 1e12) {
        throw Error(ErrorCode::SingularMiddleMatrix,
                    "F statistic middle matrix is singular or near singular");
    }
    const Eigen::VectorXd dev = hyp.R * fit.beta - hyp.r;
    const double quad = dev.dot(mid.ldlt().solve(dev));
    return static_cast<double>(fit.T()) * quad / static_cast<double>(hyp.q());
}

double t_stat_hac(const OlsFit& fit, const HypothesisSpec& hyp, const LagKernel& kernel,
                  double b_T) {
    const LrvEstimate omega = hac_lrv(fit, kernel, b_T);
    return t_from_lrv(fit, hyp, omega.value);
}

namespace {

// Cache of simulated oracle draw sets, keyed by their metadata. Plug-in sets
// are curve-specific one-offs and are not retained.
std::string pivotal_cache_key(const LagKernel& kernel, double b, const std::string& stat,
                              int q, int grid_n, int draws, std::uint64_t seed) {
    std::ostringstream key;
    key << stat << '|' << kernel.name() << '|' << b << '|' << q << '|' << grid_n << '|'
        << draws << '|' << seed;
    return key.str();
}

const LimitDrawSet& cached_pivotal_draws(const LagKernel& kernel, double b,
                                         const std::string& stat, int q, int grid_n,
                                         int draws, std::uint64_t seed) {
    static std::mutex mu;
    static std::map<std::string, LimitDrawSet> cache;
    const std::string key = pivotal_cache_key(kernel, b, stat, q, grid_n, draws, seed);
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    LimitDrawSet set =
        simulate_stationary_pivotal_draws(kernel, b, stat, q, GridSpec{grid_n}, draws, seed);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, std::move(set)).first->second;
}

double add_one_p_value(const std::vector<double>& sorted_vals, double threshold) {
    // (#{draws >= threshold} + 1) / (N + 1)
    const auto it = std::lower_bound(sorted_vals.begin(), sorted_vals.end(), threshold);
    const double count = static_cast<double>(sorted_vals.end() - it);
    return (count + 1.0) / (static_cast<double>(sorted_vals.size()) + 1.0);
}

}  // namespace

const LimitDrawSet& stationary_pivotal_cached(const LagKernel& kernel, double b,
                                              const std::string& statistic, int q,
                                              int grid_n, int draws, std::uint64_t seed) {
    return cached_pivotal_draws(kernel, b, statistic, q, grid_n, draws, seed);
}

CvEstimate two_sided_critical_value(const LimitDrawSet& set, double level) {
    if (level >= 1.0) return {0.0, 0.0};
    const std::vector<double> vals = set.sorted_abs();
    return {quantile_type7(vals, 1.0 - level), quantile_mc_se(vals, 1.0 - level)};
}

CvEstimate upper_critical_value(const LimitDrawSet& set, double level) {
    if (level >= 1.0) return {0.0, 0.0};
    const std::vector<double> vals = set.sorted();
    return {quantile_type7(vals, 1.0 - level), quantile_mc_se(vals, 1.0 - level)};
}

TestResult decide(double stat, StatKind kind, CvSource source, double level,
                  const DecisionContext& ctx) {
    if (!(level > 0.0 && level <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "decide: level must lie in (0,1]");
    }
    TestResult result;
    result.statistic = stat;
    result.kind = kind;
    result.source = source;
    result.level = level;
    const bool is_t = kind != StatKind::FFixedB;

    if (source == CvSource::Standard) {
        if (level >= 1.0) {
            result.critical_value = 0.0;
        } else if (is_t) {
            result.critical_value = normal_quantile(1.0 - level / 2.0);
        } else {
            result.critical_value =
                chi_square_quantile(1.0 - level, ctx.q) / static_cast<double>(ctx.q);
        }
        result.p_value = is_t ? 2.0 * (1.0 - normal_cdf(std::abs(stat)))
                             : 1.0 - chi_square_cdf(stat * ctx.q, ctx.q);
    } else {
        const LimitDrawSet* draws = ctx.draws;
        LimitDrawSet local;
        if (draws == nullptr) {
            if (source == CvSource::StationaryPivotal) {
                draws = &cached_pivotal_draws(ctx.kernel, ctx.b, is_t ? "t" : "F", ctx.q,
                                              ctx.grid_n, ctx.draw_count, ctx.seed);
            } else if (ctx.sigma_curve != nullptr) {
                static const std::vector<double> empty;
                local = plug_in_limit_distribution(
                    *ctx.sigma_curve, ctx.q_curve ? *ctx.q_curve : empty, ctx.kernel,
                    ctx.b, GridSpec{ctx.grid_n}, ctx.draw_count, ctx.seed);
                draws = &local;
            } else {
                throw Error(ErrorCode::MissingContext,
                            "decide: simulated source needs draws or curves");
            }
        }
        std::vector<double> vals = is_t ? draws->sorted_abs() : draws->sorted();
        if (!is_t && draws->statistic == "t") {
            // plug-in draws are simulated as t; for a single restriction the F
            // limit is the square
            vals = draws->sorted_abs();
            for (double& v : vals) v *= v;
        }
        if (level >= 1.0) {
            result.critical_value = 0.0;
            result.cv_mc_se = 0.0;
        } else {
            result.critical_value = quantile_type7(vals, 1.0 - level);
            result.cv_mc_se = quantile_mc_se(vals, 1.0 - level);
        }
        result.p_value = add_one_p_value(vals, is_t ? std::abs(stat) : stat);
    }
    result.reject = is_t ? (std::abs(stat) > result.critical_value)
                         : (stat > result.critical_value);
    return result;
}

}  // namespace har
