#include "har/limitdist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>
#include <tuple>

#include "har/numeric.hpp"
#include "har/rng.hpp"

namespace har {

void GridSpec::validate() const {
    if (n < 100) {
        throw Error(ErrorCode::OutOfRange, "GridSpec: n must be at least 100");
    }
}

namespace {

enum class LimitForm { SquaredBridge, Increment, SecondDerivative };

LimitForm choose_form(const LagKernel& kernel, double b) {
    if (kernel.id == LagKernelId::Bartlett && b == 1.0) return LimitForm::SquaredBridge;
    if (kernel.psd) return LimitForm::Increment;
    if (kernel.twice_differentiable) return LimitForm::SecondDerivative;
    throw Error(ErrorCode::NonPsdKernel,
                std::string("limit simulation needs a psd or twice-differentiable "
                            "kernel; got '") +
                    kernel.name() + "'");
}

// --------------------------- weight caches --------------------------------

using WeightKey = std::tuple<int, double, int, int>;  // kernel, b, n, which

std::shared_ptr<const std::vector<double>> cached_weights(const LagKernel& kernel,
                                                          double b, int n, bool second_dd) {
    static std::mutex mu;
    static std::map<WeightKey, std::shared_ptr<const std::vector<double>>> cache;
    const WeightKey key{static_cast<int>(kernel.id), b, n, second_dd ? 1 : 0};
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    auto w = std::make_shared<std::vector<double>>();
    w->reserve(n);
    const bool compact = kernel.id != LagKernelId::QuadraticSpectral;
    for (int d = 0; d < n; ++d) {
        const double x = static_cast<double>(d) / (static_cast<double>(n) * b);
        const double v = second_dd ? kernel.eval_dd(x) / (b * b) : kernel.eval(x);
        if (compact && v == 0.0 && d > 0 &&
            static_cast<double>(d) / static_cast<double>(n) >= b) {
            break;  // outside the support, all remaining weights vanish
        }
        w->push_back(v);
    }
    cache.emplace(key, w);
    return w;
}

// Sum_{i,j} w[|i-j|] v_i v_j over i,j = 0..len-1, by diagonals.
double toeplitz_quadratic_form(const std::vector<double>& w, const double* v, int len) {
    double total = 0.0;
    double s0 = 0.0;
    for (int i = 0; i < len; ++i) s0 += v[i] * v[i];
    total = w[0] * s0;
    const int band = std::min(static_cast<int>(w.size()) - 1, len - 1);
    for (int d = 1; d <= band; ++d) {
        if (w[d] == 0.0) continue;
        double s = 0.0;
        for (int i = d; i < len; ++i) s += v[i] * v[i - d];
        total += 2.0 * w[d] * s;
    }
    return total;
}

// --------------------------- scalar lane (p = 1) --------------------------

struct ScalarContext {
    int n = 0;
    std::vector<double> sigma;  // at left endpoints, size n
    std::vector<double> ratio;  // (int_0^{r_i} Q) / Qbar, size n+1
    double c = 1.0;             // R / Qbar
    LagKernel kernel;
    double b = 1.0;
    LimitForm form = LimitForm::SquaredBridge;
    std::shared_ptr<const std::vector<double>> weights;  // increment / K'' weights
};

ScalarContext make_scalar_context(const LagKernel& kernel, double b,
                                  const std::vector<double>& sigma,
                                  const std::vector<double>& q, double r_scalar) {
    ScalarContext ctx;
    ctx.n = static_cast<int>(sigma.size());
    ctx.sigma = sigma;
    ctx.kernel = kernel;
    ctx.b = b;
    ctx.form = choose_form(kernel, b);
    const int n = ctx.n;
    ctx.ratio.resize(n + 1);
    double acc = 0.0;
    std::vector<double> cum(n + 1);
    cum[0] = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int j = 0; j < n; ++j) {
        acc += q[j] * inv_n;
        cum[j + 1] = acc;
    }
    const double qbar = cum[n];
    if (!(qbar > 0.0)) {
        throw Error(ErrorCode::DegenerateCurve, "regressor moment path integrates to zero");
    }
    for (int i = 0; i <= n; ++i) ctx.ratio[i] = cum[i] / qbar;
    ctx.c = r_scalar / qbar;
    if (ctx.form == LimitForm::Increment) {
        ctx.weights = cached_weights(kernel, b, n, false);
    } else if (ctx.form == LimitForm::SecondDerivative) {
        ctx.weights = cached_weights(kernel, b, n, true);
    }
    return ctx;
}

// Draws the bridge H_0..H_n (H_n = 0) and returns X(1).
double scalar_bridge_draw(const ScalarContext& ctx, std::uint64_t seed,
                          std::vector<double>& h) {
    const int n = ctx.n;
    h.resize(n + 1);
    Rng rng(seed);
    const double scale = std::sqrt(1.0 / static_cast<double>(n));
    double x = 0.0;
    h[0] = 0.0;
    for (int j = 0; j < n; ++j) {
        x += ctx.sigma[j] * (scale * rng.normal());
        h[j + 1] = x;  // X(r_{j+1}) for now
    }
    const double x_end = x;
    for (int i = 1; i <= n; ++i) h[i] -= ctx.ratio[i] * x_end;
    return x_end;
}

double scalar_lrv_limit_from_bridge(const ScalarContext& ctx, const std::vector<double>& h) {
    const int n = ctx.n;
    switch (ctx.form) {
        case LimitForm::SquaredBridge: {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += h[i] * h[i];
            return 2.0 * s / static_cast<double>(n);
        }
        case LimitForm::Increment: {
            std::vector<double> db(n);
            for (int i = 0; i < n; ++i) db[i] = h[i + 1] - h[i];
            return toeplitz_quadratic_form(*ctx.weights, db.data(), n);
        }
        case LimitForm::SecondDerivative: {
            const double q = toeplitz_quadratic_form(*ctx.weights, h.data(), n);
            return -q / (static_cast<double>(n) * static_cast<double>(n));
        }
    }
    return 0.0;
}

double scalar_t_draw(const ScalarContext& ctx, std::uint64_t seed,
                     std::vector<double>& scratch) {
    const double x_end = scalar_bridge_draw(ctx, seed, scratch);
    const double g = scalar_lrv_limit_from_bridge(ctx, scratch);
    const double num = ctx.c * x_end;
    const double den2 = ctx.c * g * ctx.c;
    if (!(den2 > 0.0)) {
        throw Error(ErrorCode::DegenerateVariance, "limit denominator is not positive");
    }
    return num / std::sqrt(den2);
}

std::vector<double> path_on_grid_scalar(const MatrixPath& path, int n, bool take_sqrt) {
    std::vector<double> out(n);
    for (int j = 0; j < n; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(n);
        out[j] = take_sqrt ? path.scalar_sqrt(u) : path.scalar_value(u);
    }
    return out;
}

// --------------------------- general lane ---------------------------------

struct MatrixContext {
    int n = 0;
    int p = 1;
    std::vector<Eigen::MatrixXd> sigma;  // size n
    std::vector<Eigen::MatrixXd> ratio;  // (int_0^{r_i} Q) Qbar^{-1}, size n+1
    Eigen::MatrixXd qbar_inv;
    LagKernel kernel;
    double b = 1.0;
    LimitForm form = LimitForm::SquaredBridge;
    std::shared_ptr<const std::vector<double>> weights;
};

MatrixContext make_matrix_context(const LagKernel& kernel, double b,
                                  const VariancePath& sigma_path,
                                  const RegressorMomentPath& q_path, int n) {
    MatrixContext ctx;
    ctx.n = n;
    ctx.p = sigma_path.dim();
    ctx.kernel = kernel;
    ctx.b = b;
    ctx.form = choose_form(kernel, b);
    ctx.sigma.reserve(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd cum = Eigen::MatrixXd::Zero(ctx.p, ctx.p);
    std::vector<Eigen::MatrixXd> cums;
    cums.reserve(n + 1);
    cums.push_back(cum);
    for (int j = 0; j < n; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(n);
        ctx.sigma.push_back(sigma_path.sqrt_value(u));
        cum += q_path.value(u) * inv_n;
        cums.push_back(cum);
    }
    ctx.qbar_inv = cums.back().inverse();
    ctx.ratio.reserve(n + 1);
    for (int i = 0; i <= n; ++i) ctx.ratio.push_back(cums[i] * ctx.qbar_inv);
    if (ctx.form == LimitForm::Increment) {
        ctx.weights = cached_weights(kernel, b, n, false);
    } else if (ctx.form == LimitForm::SecondDerivative) {
        ctx.weights = cached_weights(kernel, b, n, true);
    }
    return ctx;
}

// Path rows X(r_i)' for i = 0..n; returns the bridge rows H and X(1).
Eigen::MatrixXd matrix_bridge_draw(const MatrixContext& ctx, std::uint64_t seed,
                                   Eigen::VectorXd& x_end) {
    const int n = ctx.n;
    const int p = ctx.p;
    Rng rng(seed);
    const double scale = std::sqrt(1.0 / static_cast<double>(n));
    Eigen::MatrixXd h(n + 1, p);
    h.row(0).setZero();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd dw(p);
    for (int j = 0; j < n; ++j) {
        for (int c = 0; c < p; ++c) dw[c] = scale * rng.normal();
        x += ctx.sigma[j] * dw;
        h.row(j + 1) = x.transpose();
    }
    x_end = x;
    for (int i = 1; i <= n; ++i) {
        h.row(i) -= (ctx.ratio[i] * x_end).transpose();
    }
    return h;
}

Eigen::MatrixXd matrix_lrv_limit_from_bridge(const MatrixContext& ctx,
                                             const Eigen::MatrixXd& h) {
    const int n = ctx.n;
    const int p = ctx.p;
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
    switch (ctx.form) {
        case LimitForm::SquaredBridge: {
            for (int i = 0; i < n; ++i) {
                total.noalias() += h.row(i).transpose() * h.row(i);
            }
            total *= 2.0 / static_cast<double>(n);
            return total;
        }
        case LimitForm::Increment: {
            Eigen::MatrixXd db(n, p);
            for (int i = 0; i < n; ++i) db.row(i) = h.row(i + 1) - h.row(i);
            const auto& w = *ctx.weights;
            for (int i = 0; i < n; ++i) {
                total.noalias() += w[0] * (db.row(i).transpose() * db.row(i));
            }
            const int band = std::min(static_cast<int>(w.size()) - 1, n - 1);
            for (int d = 1; d <= band; ++d) {
                if (w[d] == 0.0) continue;
                Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
                for (int i = d; i < n; ++i) {
                    s.noalias() += db.row(i).transpose() * db.row(i - d);
                }
                total.noalias() += w[d] * (s + s.transpose());
            }
            return total;
        }
        case LimitForm::SecondDerivative: {
            const auto& w = *ctx.weights;
            for (int i = 0; i < n; ++i) {
                total.noalias() += w[0] * (h.row(i).transpose() * h.row(i));
            }
            const int band = std::min(static_cast<int>(w.size()) - 1, n - 1);
            for (int d = 1; d <= band; ++d) {
                if (w[d] == 0.0) continue;
                Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
                for (int i = d; i < n; ++i) {
                    s.noalias() += h.row(i).transpose() * h.row(i - d);
                }
                total.noalias() += w[d] * (s + s.transpose());
            }
            total /= -(static_cast<double>(n) * static_cast<double>(n));
            return total;
        }
    }
    return total;
}

bool scalar_case(const VariancePath& sigma_path, const RegressorMomentPath& q_path,
                 const Eigen::MatrixXd& R) {
    return sigma_path.dim() == 1 && q_path.dim() == 1 && R.rows() == 1 && R.cols() == 1;
}

}  // namespace

WienerPath simulate_weighted_wiener(const VariancePath& sigma_path, GridSpec grid,
                                    std::uint64_t seed) {
    grid.validate();
    const int n = grid.n;
    const int p = sigma_path.dim();
    WienerPath path;
    path.n = n;
    path.values.resize(n + 1, p);
    path.values.row(0).setZero();
    Rng rng(seed);
    const double scale = std::sqrt(1.0 / static_cast<double>(n));
    if (p == 1) {
        double x = 0.0;
        for (int j = 0; j < n; ++j) {
            const double u = static_cast<double>(j) / static_cast<double>(n);
            x += sigma_path.scalar_sqrt(u) * (scale * rng.normal());
            path.values(j + 1, 0) = x;
        }
    } else {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
        Eigen::VectorXd dw(p);
        for (int j = 0; j < n; ++j) {
            const double u = static_cast<double>(j) / static_cast<double>(n);
            for (int c = 0; c < p; ++c) dw[c] = scale * rng.normal();
            x += sigma_path.sqrt_value(u) * dw;
            path.values.row(j + 1) = x.transpose();
        }
    }
    return path;
}

Eigen::MatrixXd bridge_functional(const WienerPath& path,
                                  const RegressorMomentPath& q_path) {
    const int n = path.n;
    const int p = path.dim();
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd h = path.values;
    const Eigen::VectorXd x_end = path.values.row(n).transpose();
    if (q_path.dim() != p) {
        throw Error(ErrorCode::OutOfRange, "bridge_functional: path dimensions disagree");
    }
    if (p == 1) {
        std::vector<double> cum(n + 1);
        cum[0] = 0.0;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
            acc += q_path.scalar_value(static_cast<double>(j) * inv_n) * inv_n;
            cum[j + 1] = acc;
        }
        for (int i = 1; i <= n; ++i) {
            h(i, 0) -= (cum[i] / cum[n]) * x_end(0);
        }
        return h;
    }
    Eigen::MatrixXd cum = Eigen::MatrixXd::Zero(p, p);
    std::vector<Eigen::MatrixXd> cums;
    cums.reserve(n + 1);
    cums.push_back(cum);
    for (int j = 0; j < n; ++j) {
        cum += q_path.value(static_cast<double>(j) * inv_n) * inv_n;
        cums.push_back(cum);
    }
    const Eigen::MatrixXd qbar_inv = cums.back().inverse();
    for (int i = 1; i <= n; ++i) {
        h.row(i) -= (cums[i] * qbar_inv * x_end).transpose();
    }
    return h;
}

Eigen::MatrixXd draw_lrv_limit_second_derivative_form(const LagKernel& kernel,
                                                      const VariancePath& sigma_path,
                                                      const RegressorMomentPath& q_path,
                                                      GridSpec grid, std::uint64_t seed) {
    grid.validate();
    if (!kernel.twice_differentiable) {
        throw Error(ErrorCode::UnsupportedKernel,
                    std::string("second-derivative limit form needs K''; kernel '") +
                        kernel.name() +
                        "' is handled by the squared-bridge form instead");
    }
    MatrixContext ctx = make_matrix_context(kernel, 1.0, sigma_path, q_path, grid.n);
    ctx.form = LimitForm::SecondDerivative;
    ctx.weights = cached_weights(kernel, 1.0, grid.n, true);
    Eigen::VectorXd x_end;
    const Eigen::MatrixXd h = matrix_bridge_draw(ctx, seed, x_end);
    return matrix_lrv_limit_from_bridge(ctx, h);
}

Eigen::MatrixXd draw_lrv_limit_bartlett_form(const VariancePath& sigma_path,
                                             const RegressorMomentPath& q_path,
                                             GridSpec grid, std::uint64_t seed) {
    grid.validate();
    MatrixContext ctx = make_matrix_context(make_lag_kernel(LagKernelId::Bartlett), 1.0,
                                            sigma_path, q_path, grid.n);
    Eigen::VectorXd x_end;
    const Eigen::MatrixXd h = matrix_bridge_draw(ctx, seed, x_end);
    return matrix_lrv_limit_from_bridge(ctx, h);
}

Eigen::MatrixXd draw_lrv_limit_increment_form(const BandwidthedKernel& kernel,
                                              const VariancePath& sigma_path,
                                              const RegressorMomentPath& q_path,
                                              GridSpec grid, std::uint64_t seed) {
    grid.validate();
    if (!kernel.base.psd) {
        throw Error(ErrorCode::NonPsdKernel,
                    std::string("increment limit form needs a psd kernel; got '") +
                        kernel.base.name() + "'");
    }
    MatrixContext ctx =
        make_matrix_context(kernel.base, kernel.b, sigma_path, q_path, grid.n);
    ctx.form = LimitForm::Increment;
    ctx.weights = cached_weights(kernel.base, kernel.b, grid.n, false);
    Eigen::VectorXd x_end;
    const Eigen::MatrixXd h = matrix_bridge_draw(ctx, seed, x_end);
    return matrix_lrv_limit_from_bridge(ctx, h);
}

namespace {

double general_t_or_f_draw(const LagKernel& kernel, double b,
                           const VariancePath& sigma_path,
                           const RegressorMomentPath& q_path, const Eigen::MatrixXd& R,
                           GridSpec grid, std::uint64_t seed, bool want_f) {
    const int q = static_cast<int>(R.rows());
    if (!want_f && q != 1) {
        throw Error(ErrorCode::OutOfRange, "limit t draw needs a single restriction");
    }
    if (scalar_case(sigma_path, q_path, R)) {
        const int n = grid.n;
        ScalarContext ctx = make_scalar_context(
            kernel, b, path_on_grid_scalar(sigma_path, n, true),
            path_on_grid_scalar(q_path, n, false), R(0, 0));
        std::vector<double> scratch;
        const double t = scalar_t_draw(ctx, seed, scratch);
        return want_f ? t * t : t;
    }
    MatrixContext ctx = make_matrix_context(kernel, b, sigma_path, q_path, grid.n);
    Eigen::VectorXd x_end;
    const Eigen::MatrixXd h = matrix_bridge_draw(ctx, seed, x_end);
    const Eigen::MatrixXd g = matrix_lrv_limit_from_bridge(ctx, h);
    const Eigen::MatrixXd rq = R * ctx.qbar_inv;
    const Eigen::VectorXd num = rq * x_end;
    const Eigen::MatrixXd mid = rq * g * rq.transpose();
    if (!want_f) {
        if (!(mid(0, 0) > 0.0)) {
            throw Error(ErrorCode::DegenerateVariance, "limit denominator is not positive");
        }
        return num(0) / std::sqrt(mid(0, 0));
    }
    Eigen::LDLT<Eigen::MatrixXd> solver(mid);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::SingularMiddleMatrix, "limit F middle matrix is singular");
    }
    return num.dot(solver.solve(num)) / static_cast<double>(q);
}

}  // namespace

double limit_t_draw(const LagKernel& kernel, double b, const VariancePath& sigma_path,
                    const RegressorMomentPath& q_path, const Eigen::MatrixXd& R,
                    GridSpec grid, std::uint64_t seed) {
    grid.validate();
    return general_t_or_f_draw(kernel, b, sigma_path, q_path, R, grid, seed, false);
}

double limit_f_draw(const LagKernel& kernel, double b, const VariancePath& sigma_path,
                    const RegressorMomentPath& q_path, const Eigen::MatrixXd& R,
                    GridSpec grid, std::uint64_t seed) {
    grid.validate();
    return general_t_or_f_draw(kernel, b, sigma_path, q_path, R, grid, seed, true);
}

std::vector<double> LimitDrawSet::sorted() const {
    std::vector<double> v = draws;
    std::sort(v.begin(), v.end());
    return v;
}

std::vector<double> LimitDrawSet::sorted_abs() const {
    std::vector<double> v = draws;
    for (double& x : v) x = std::abs(x);
    std::sort(v.begin(), v.end());
    return v;
}

LimitDrawSet simulate_limit_t_draws(const LagKernel& kernel, double b,
                                    const VariancePath& sigma_path,
                                    const RegressorMomentPath& q_path,
                                    const Eigen::MatrixXd& R, GridSpec grid, int reps,
                                    std::uint64_t seed) {
    grid.validate();
    LimitDrawSet set;
    set.statistic = "t";
    set.kernel = kernel.id;
    set.b = b;
    set.grid_n = grid.n;
    set.seed = seed;
    set.draws.reserve(reps);
    if (scalar_case(sigma_path, q_path, R)) {
        const int n = grid.n;
        ScalarContext ctx = make_scalar_context(
            kernel, b, path_on_grid_scalar(sigma_path, n, true),
            path_on_grid_scalar(q_path, n, false), R(0, 0));
        std::vector<double> scratch;
        for (int d = 0; d < reps; ++d) {
            set.draws.push_back(scalar_t_draw(ctx, derive_seed(seed, d), scratch));
        }
    } else {
        for (int d = 0; d < reps; ++d) {
            set.draws.push_back(general_t_or_f_draw(kernel, b, sigma_path, q_path, R,
                                                    grid, derive_seed(seed, d), false));
        }
    }
    return set;
}

LimitDrawSet simulate_stationary_pivotal_draws(const LagKernel& kernel, double b,
                                               const std::string& statistic, int q,
                                               GridSpec grid, int reps,
                                               std::uint64_t seed) {
    grid.validate();
    if (statistic == "t") {
        VariancePath unit = MatrixPath::scalar(ScalarPath(1.0));
        LimitDrawSet set = simulate_limit_t_draws(kernel, b, unit, unit,
                                                  Eigen::MatrixXd::Identity(1, 1), grid,
                                                  reps, seed);
        return set;
    }
    if (statistic != "F") {
        throw Error(ErrorCode::UsageError, "statistic must be 't' or 'F'");
    }
    VariancePath sigma = MatrixPath::constant(Eigen::MatrixXd::Identity(q, q));
    RegressorMomentPath qp = MatrixPath::constant(Eigen::MatrixXd::Identity(q, q));
    LimitDrawSet set;
    set.statistic = "F";
    set.kernel = kernel.id;
    set.b = b;
    set.grid_n = grid.n;
    set.seed = seed;
    set.draws.reserve(reps);
    const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(q, q);
    for (int d = 0; d < reps; ++d) {
        set.draws.push_back(general_t_or_f_draw(kernel, b, sigma, qp, R, grid,
                                                derive_seed(seed, d), true));
    }
    return set;
}

CriticalValueTable critical_values(const std::vector<double>& draws,
                                   const std::vector<double>& levels) {
    if (draws.size() < 1000) {
        throw Error(ErrorCode::TooFewDraws,
                    "critical_values: need at least 1000 draws");
    }
    std::vector<double> sorted = draws;
    std::sort(sorted.begin(), sorted.end());
    CriticalValueTable table;
    for (double level : levels) {
        if (!(level > 0.0 && level < 1.0)) {
            throw Error(ErrorCode::OutOfRange, "critical_values: levels must lie in (0,1)");
        }
        CriticalValueRow row;
        row.level = level;
        row.value = quantile_type7(sorted, level);
        row.mc_se = quantile_mc_se(sorted, level);
        table.rows.push_back(row);
    }
    return table;
}

CriticalValueTable critical_values(const LimitDrawSet& set,
                                   const std::vector<double>& levels) {
    return critical_values(set.draws, levels);
}

namespace {

std::uint64_t fnv1a_bytes(const void* data, std::size_t size, std::uint64_t h) {
    const unsigned char* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

LimitDrawSet plug_in_limit_distribution(const LocalLrvCurve& curve,
                                        const std::vector<double>& q_curve,
                                        const LagKernel& kernel, double b, GridSpec grid,
                                        int reps, std::uint64_t seed) {
    grid.validate();
    if (curve.points() == 0 || curve.dim() != 1) {
        throw Error(ErrorCode::DegenerateCurve,
                    "plug_in_limit_distribution: need a scalar curve on a nonempty grid");
    }
    double max_omega = 0.0;
    for (int i = 0; i < curve.points(); ++i) max_omega = std::max(max_omega, curve.omega_at(i));
    if (!(max_omega > 0.0)) {
        throw Error(ErrorCode::DegenerateCurve, "plug_in_limit_distribution: curve is zero");
    }
    if (!q_curve.empty() && static_cast<int>(q_curve.size()) != curve.points()) {
        throw Error(ErrorCode::OutOfRange,
                    "plug_in_limit_distribution: q curve must match the sigma curve grid");
    }

    // Step interpolation onto the simulation grid: each cell takes the value
    // at the nearest curve point at or left of its left endpoint.
    const int n = grid.n;
    std::vector<double> sigma_step(n), q_step(n);
    for (int j = 0; j < n; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(n);
        int idx = 0;
        while (idx + 1 < curve.points() && curve.grid[idx + 1] <= u) ++idx;
        sigma_step[j] = curve.sigma_at(idx);
        q_step[j] = q_curve.empty() ? 1.0 : q_curve[idx];
    }

    ScalarContext ctx = make_scalar_context(kernel, b, sigma_step, q_step, 1.0);
    LimitDrawSet set;
    set.statistic = "t";
    set.kernel = kernel.id;
    set.b = b;
    set.grid_n = n;
    set.seed = seed;
    set.sigma_source = "plug-in";
    set.q_source = q_curve.empty() ? "unit" : "plug-in";
    std::uint64_t h = 1469598103934665603ULL;
    for (int i = 0; i < curve.points(); ++i) {
        const double u = curve.grid[i];
        const double om = curve.omega_at(i);
        h = fnv1a_bytes(&u, sizeof(u), h);
        h = fnv1a_bytes(&om, sizeof(om), h);
    }
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    set.curve_hash = hex;
    set.draws.reserve(reps);
    std::vector<double> scratch;
    for (int d = 0; d < reps; ++d) {
        set.draws.push_back(scalar_t_draw(ctx, derive_seed(seed, d), scratch));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Moments, cumulants, expansion
// ---------------------------------------------------------------------------

double fixed_b_limit_mean(const BandwidthedKernel& kernel,
                          const VariancePath& omega_path) {
    if (omega_path.dim() != 1) {
        throw Error(ErrorCode::OutOfRange, "fixed_b_limit_mean: p = 1 only");
    }
    const DemeanedKernel dk(kernel);
    std::vector<double> splits = omega_path.breaks();
    const double b = kernel.b;
    for (double s : {b, 1.0 - b, 0.5 * b, 1.0 - 0.5 * b}) splits.push_back(s);
    return integrate_piecewise(
        [&](double s) { return dk(s, s) * omega_path.scalar_value(s); }, 0.0, 1.0,
        splits, 1e-8);
}

double limit_cumulant(const BandwidthedKernel& kernel, const VariancePath& omega_path,
                      int m, int grid_scale) {
    if (m < 2 || m > 4) {
        throw Error(ErrorCode::OutOfRange, "limit_cumulant: m must be 2, 3 or 4");
    }
    if (omega_path.dim() != 1) {
        throw Error(ErrorCode::OutOfRange, "limit_cumulant: p = 1 only");
    }
    if (grid_scale < 1 || grid_scale > 8) {
        throw Error(ErrorCode::OutOfRange, "limit_cumulant: grid_scale must be 1..8");
    }
    const int g = (m == 2 ? 200 : (m == 3 ? 80 : 40)) * grid_scale;
    const DemeanedKernel dk(kernel);
    std::vector<double> tau(g), edge(g), om(g);
    for (int i = 0; i < g; ++i) {
        tau[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(g);
        edge[i] = dk.edge_integral(tau[i]);
        om[i] = omega_path.scalar_value(tau[i]);
    }
    // Midpoint tensor quadrature of the cyclic product, computed as a trace
    // of powers of A_ij = Omega(tau_i) K*(tau_i, tau_j) / g.
    Eigen::MatrixXd a(g, g);
    const double dd = dk.double_integral();
    const double inv_g = 1.0 / static_cast<double>(g);
    for (int i = 0; i < g; ++i) {
        for (int j = 0; j < g; ++j) {
            const double kstar = kernel.eval(tau[i] - tau[j]) - edge[i] - edge[j] + dd;
            a(i, j) = om[i] * kstar * inv_g;
        }
    }
    double trace = 0.0;
    if (m == 2) {
        trace = (a.array() * a.transpose().array()).sum();
    } else if (m == 3) {
        const Eigen::MatrixXd a2 = a * a;
        trace = (a2.array() * a.transpose().array()).sum();
    } else {
        const Eigen::MatrixXd a2 = a * a;
        trace = (a2.array() * a2.transpose().array()).sum();
    }
    const double omega = omega_path.scalar_integrated();
    double factorial = 1.0;
    for (int i = 2; i < m; ++i) factorial *= static_cast<double>(i);
    return std::pow(2.0, m - 1) * factorial * std::pow(omega, -m) * trace;
}

namespace {

struct FiniteSampleWork {
    Eigen::MatrixXd product;  // Upsilon * demeaned weight matrix
    double omega_T = 0.0;
};

FiniteSampleWork finite_sample_product(const DgpSpec& spec, int T,
                                       const BandwidthedKernel& kernel) {
    if (T > 2000) {
        throw Error(ErrorCode::TooLarge, "finite-sample cumulants: T capped at 2000");
    }
    const Eigen::MatrixXd ups = error_autocovariance_matrix(spec, T);
    // Weight matrix K_b((i-j)/T), demeaned on both sides by A = I - ll'/T.
    Eigen::VectorXd first_row(T);
    for (int d = 0; d < T; ++d) {
        first_row[d] =
            kernel.base.eval(static_cast<double>(d) / (static_cast<double>(T) * kernel.b));
    }
    Eigen::MatrixXd w(T, T);
    for (int i = 0; i < T; ++i) {
        for (int j = 0; j < T; ++j) w(i, j) = first_row[std::abs(i - j)];
    }
    const Eigen::VectorXd row_mean = w.rowwise().mean();
    const double grand_mean = row_mean.mean();
    w.colwise() -= row_mean;
    w.rowwise() -= row_mean.transpose();
    w.array() += grand_mean;

    FiniteSampleWork work;
    work.omega_T = ups.sum() / static_cast<double>(T);
    work.product = ups * w;
    return work;
}

}  // namespace

double finite_sample_mean(const DgpSpec& spec, int T, const BandwidthedKernel& kernel) {
    const FiniteSampleWork work = finite_sample_product(spec, T, kernel);
    return work.product.trace() / (static_cast<double>(T) * work.omega_T);
}

double finite_sample_cumulant(const DgpSpec& spec, int T, const BandwidthedKernel& kernel,
                              int m) {
    if (m == 1) return 0.0;  // centered by construction
    if (m < 1 || m > 4) {
        throw Error(ErrorCode::OutOfRange, "finite_sample_cumulant: m must be 1..4");
    }
    const FiniteSampleWork work = finite_sample_product(spec, T, kernel);
    const Eigen::MatrixXd& mprod = work.product;
    double trace = 0.0;
    if (m == 2) {
        trace = (mprod.array() * mprod.transpose().array()).sum();
    } else if (m == 3) {
        const Eigen::MatrixXd m2 = mprod * mprod;
        trace = (m2.array() * mprod.transpose().array()).sum();
    } else {
        const Eigen::MatrixXd m2 = mprod * mprod;
        trace = (m2.array() * m2.transpose().array()).sum();
    }
    double factorial = 1.0;
    for (int i = 2; i < m; ++i) factorial *= static_cast<double>(i);
    const double scale = std::pow(static_cast<double>(T) * work.omega_T, -m);
    return std::pow(2.0, m - 1) * factorial * scale * trace;
}

double xi_from_cumulants(const std::map<int, double>& kappa, int m) {
    switch (m) {
        case 1:
            return 0.0;
        case 2:
            return kappa.at(2);
        case 3:
            return kappa.at(3);
        case 4: {
            const double k2 = kappa.at(2);
            return kappa.at(4) + 3.0 * k2 * k2;
        }
        default:
            throw Error(ErrorCode::OutOfRange, "xi_from_cumulants: m must be 1..4");
    }
}

double expansion_two_sided_prob(const BandwidthedKernel& kernel,
                                const VariancePath& omega_path, double z, int m_max,
                                bool enforce_b_bound) {
    if (omega_path.dim() != 1) {
        throw Error(ErrorCode::OutOfRange, "expansion_two_sided_prob: p = 1 only");
    }
    if (m_max < 1 || m_max > 3) {
        throw Error(ErrorCode::OutOfRange, "expansion_two_sided_prob: m_max must be 1..3");
    }
    const double c_omega = omega_path.scalar_sup();
    const double c2 = std::max(c_omega, 1.0);
    const double bound = 1.0 / (16.0 * c2 * abs_integral(kernel.base));
    if (enforce_b_bound && !(kernel.b < bound)) {
        throw Error(ErrorCode::BandwidthTooLarge,
                    "expansion_two_sided_prob: b must be below 1/(16 max{C_Omega,1} "
                    "int|K|) = " +
                        std::to_string(bound));
    }
    if (z <= 0.0) return 0.0;

    const double omega = omega_path.scalar_integrated();
    const double mu_norm = fixed_b_limit_mean(kernel, omega_path) / omega;
    std::map<int, double> kappa;
    const int top = std::min(4, m_max + 1);
    for (int m = 2; m <= top; ++m) kappa[m] = limit_cumulant(kernel, omega_path, m);

    const double x = mu_norm * z * z;
    double total = chi1_cdf_derivative(x, 0);
    double factorial = 1.0;
    double z2m = z * z;
    for (int m = 2; m <= top; ++m) {
        factorial *= static_cast<double>(m);
        z2m *= z * z;
        // z^{2m} accumulated incrementally: here z2m = z^{2m}.
        total += chi1_cdf_derivative(x, m) * xi_from_cumulants(kappa, m) * z2m / factorial;
    }
    return total;
}

MomentReport moment_report(const BandwidthedKernel& kernel, const VariancePath& omega_path,
                           int m_max, const DgpSpec* finite_spec, int T) {
    MomentReport report;
    report.mean = fixed_b_limit_mean(kernel, omega_path);
    const double omega = omega_path.scalar_integrated();
    const double c_omega = omega_path.scalar_sup();
    const double c1_bar = 4.0 * abs_integral(kernel.base);
    double factorial = 1.0;
    for (int m = 2; m <= std::min(4, m_max); ++m) {
        factorial *= static_cast<double>(m - 1);
        report.kappa[m] = limit_cumulant(kernel, omega_path, m);
        report.kappa_bound[m] = std::pow(2.0, m) * factorial * std::pow(omega, -m) *
                                std::pow(c_omega, m) *
                                std::pow(c1_bar * kernel.b, m - 1);
    }
    for (int m = 2; m <= std::min(4, m_max); ++m) {
        report.xi[m] = xi_from_cumulants(report.kappa, m);
    }
    if (finite_spec != nullptr && T > 0) {
        report.finite_T_mean = finite_sample_mean(*finite_spec, T, kernel);
        for (int m = 2; m <= std::min(4, m_max); ++m) {
            report.finite_T_kappa[m] = finite_sample_cumulant(*finite_spec, T, kernel, m);
        }
    }
    return report;
}

}  // namespace har
