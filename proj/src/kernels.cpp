#include "har/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "har/numeric.hpp"

namespace har {

namespace {

constexpr double kQsScale = 6.0 * M_PI / 5.0;

double qs_eval(double x) {
    const double z = kQsScale * std::abs(x);
    if (z < 0.5) {
        // Series around the removable singularity at 0; the closed form
        // cancels catastrophically for small z.
        const double z2 = z * z;
        return 1.0 +
               z2 * (-1.0 / 10.0 +
                     z2 * (1.0 / 280.0 +
                           z2 * (-1.0 / 15120.0 +
                                 z2 * (1.0 / 1330560.0 - z2 / 172972800.0))));
    }
    return 3.0 * (std::sin(z) - z * std::cos(z)) / (z * z * z);
}

double qs_eval_dd(double x) {
    const double z = kQsScale * std::abs(x);
    const double a2 = kQsScale * kQsScale;
    if (z < 0.9) {
        const double z2 = z * z;
        return a2 * (-0.2 + z2 * (3.0 / 70.0 +
                                  z2 * (-1.0 / 504.0 +
                                        z2 * (1.0 / 23760.0 - z2 / 1921920.0))));
    }
    const double z2 = z * z;
    const double z3 = z2 * z;
    const double z5 = z2 * z3;
    const double num =
        z3 * std::cos(z) - 5.0 * z2 * std::sin(z) - 12.0 * z * std::cos(z) + 12.0 * std::sin(z);
    return a2 * 3.0 * num / z5;
}

double parzen_eval(double x) {
    const double ax = std::abs(x);
    if (ax <= 0.5) return 1.0 - 6.0 * ax * ax + 6.0 * ax * ax * ax;
    if (ax <= 1.0) {
        const double t = 1.0 - ax;
        return 2.0 * t * t * t;
    }
    return 0.0;
}

double parzen_eval_dd(double x) {
    const double ax = std::abs(x);
    if (ax <= 0.5) return -12.0 + 36.0 * ax;
    if (ax <= 1.0) return 12.0 * (1.0 - ax);
    return 0.0;
}

double tukey_eval(double x) {
    const double ax = std::abs(x);
    if (ax > 1.0) return 0.0;
    return 0.5 * (1.0 + std::cos(M_PI * ax));
}

double tukey_eval_dd(double x) {
    // Interior second derivative; one-sided limit at |x| = 1.
    const double ax = std::abs(x);
    if (ax > 1.0) return 0.0;
    return -0.5 * M_PI * M_PI * std::cos(M_PI * ax);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

double LagKernel::eval(double x) const {
    switch (id) {
        case LagKernelId::Bartlett: {
            const double ax = std::abs(x);
            return ax <= 1.0 ? 1.0 - ax : 0.0;
        }
        case LagKernelId::Parzen:
            return parzen_eval(x);
        case LagKernelId::QuadraticSpectral:
            return qs_eval(x);
        case LagKernelId::TukeyHanning:
            return tukey_eval(x);
        case LagKernelId::Truncated:
            // open support: weights vanish from b_T k = 1 onwards
            return std::abs(x) < 1.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

double LagKernel::eval_dd(double x) const {
    switch (id) {
        case LagKernelId::Parzen:
            return parzen_eval_dd(x);
        case LagKernelId::QuadraticSpectral:
            return qs_eval_dd(x);
        case LagKernelId::TukeyHanning:
            return tukey_eval_dd(x);
        case LagKernelId::Bartlett:
            throw Error(ErrorCode::UnsupportedKernel,
                        "Bartlett kernel has no second derivative at 0; use the "
                        "dedicated squared-bridge limit path");
        case LagKernelId::Truncated:
            throw Error(ErrorCode::UnsupportedKernel,
                        "truncated kernel is not twice differentiable");
    }
    return 0.0;
}

const char* LagKernel::name() const {
    switch (id) {
        case LagKernelId::Bartlett: return "bartlett";
        case LagKernelId::Parzen: return "parzen";
        case LagKernelId::QuadraticSpectral: return "qs";
        case LagKernelId::TukeyHanning: return "tukey-hanning";
        case LagKernelId::Truncated: return "truncated";
    }
    return "?";
}

LagKernel make_lag_kernel(LagKernelId id) {
    switch (id) {
        case LagKernelId::Bartlett:
            return {id, 1, true, false};
        case LagKernelId::Parzen:
            return {id, 2, true, true};
        case LagKernelId::QuadraticSpectral:
            return {id, 2, true, true};
        case LagKernelId::TukeyHanning:
            return {id, 2, false, true};
        case LagKernelId::Truncated:
            // 1 - K vanishes identically near the origin.
            return {id, std::numeric_limits<int>::max(), false, false};
    }
    throw Error(ErrorCode::UsageError, "unknown kernel id");
}

LagKernel lag_kernel_from_name(const std::string& name) {
    const std::string n = lower(name);
    if (n == "bartlett") return make_lag_kernel(LagKernelId::Bartlett);
    if (n == "parzen") return make_lag_kernel(LagKernelId::Parzen);
    if (n == "qs" || n == "quadratic-spectral") {
        return make_lag_kernel(LagKernelId::QuadraticSpectral);
    }
    if (n == "tukey-hanning" || n == "th") return make_lag_kernel(LagKernelId::TukeyHanning);
    if (n == "truncated") return make_lag_kernel(LagKernelId::Truncated);
    throw Error(ErrorCode::UsageError, "unknown kernel name: " + name);
}

double eval_lag_kernel(const LagKernel& k, double x) { return k.eval(x); }
double eval_lag_kernel_dd(const LagKernel& k, double x) { return k.eval_dd(x); }
int parzen_exponent(const LagKernel& k) { return k.q0; }

double discrete_second_difference(const LagKernel& k, long T, double r) {
    if (T < 3) {
        throw Error(ErrorCode::OutOfRange, "discrete_second_difference: T must be >= 3");
    }
    if (!k.twice_differentiable) {
        // Same restriction as the analytic second derivative.
        k.eval_dd(r);
    }
    const double Td = static_cast<double>(T);
    const double m = std::floor(Td * r);
    const double up = k.eval((m + 1.0) / Td);
    const double mid = k.eval(m / Td);
    const double down = k.eval((m - 1.0) / Td);
    return Td * Td * ((up - mid) - (mid - down));
}

double abs_integral(const LagKernel& k) {
    switch (k.id) {
        case LagKernelId::Bartlett:
            return 1.0;
        case LagKernelId::Parzen:
            return 0.75;
        case LagKernelId::TukeyHanning:
            return 1.0;
        case LagKernelId::Truncated:
            return 2.0;
        case LagKernelId::QuadraticSpectral: {
            // |K| is integrable but oscillates; integrate piece by piece
            // between the kinks of |.| and add an envelope bound for the tail.
            static const double value = [] {
                const LagKernel qs = make_lag_kernel(LagKernelId::QuadraticSpectral);
                const double L = 120.0;
                const double step = 0.5 * M_PI / kQsScale;
                double total = 0.0;
                double x = 0.0;
                while (x < L) {
                    const double xe = std::min(L, x + step);
                    total += integrate([&](double t) { return std::abs(qs.eval(t)); }, x,
                                       xe, 1e-10);
                    x = xe;
                }
                // |K(x)| <~ 3 |cos(ax)| / (ax)^2 for large x.
                const double tail = (6.0 / M_PI) / (kQsScale * kQsScale * L);
                return 2.0 * (total + tail);
            }();
            return value;
        }
    }
    return 0.0;
}

BandwidthedKernel make_bandwidthed(LagKernelId id, double b) {
    if (!(b > 0.0 && b <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "bandwidth b must lie in (0,1]");
    }
    return {make_lag_kernel(id), b};
}

namespace {

// Signed antiderivative int_0^x K_b(s) ds for the Bartlett kernel.
double bartlett_antiderivative(double x, double b) {
    const double ax = std::min(std::abs(x), b);
    const double v = ax - ax * ax / (2.0 * b);
    return x >= 0.0 ? v : -v;
}

}  // namespace

DemeanedKernel::DemeanedKernel(BandwidthedKernel kb) : kb_(kb) {
    // int_0^1 int_0^1 K_b(t - tau) dt dtau = 2 int_0^1 (1-u) K_b(u) du.
    if (kb_.base.id == LagKernelId::Bartlett) {
        const double b = kb_.b;
        double_integral_ = b - b * b / 3.0;
    } else {
        const double b = kb_.b;
        double_integral_ =
            2.0 * integrate_piecewise(
                      [&](double u) { return (1.0 - u) * kb_.eval(u); }, 0.0, 1.0,
                      {0.5 * b, b}, 1e-10);
    }
}

double DemeanedKernel::edge_integral(double r) const {
    if (kb_.base.id == LagKernelId::Bartlett) {
        return bartlett_antiderivative(r, kb_.b) + bartlett_antiderivative(1.0 - r, kb_.b);
    }
    const double b = kb_.b;
    return integrate_piecewise([&](double t) { return kb_.eval(r - t); }, 0.0, 1.0,
                               {r - b, r - 0.5 * b, r, r + 0.5 * b, r + b}, 1e-10);
}

double DemeanedKernel::operator()(double r, double s) const {
    return kb_.eval(r - s) - edge_integral(r) - edge_integral(s) + double_integral_;
}

double demeaned_kernel(const BandwidthedKernel& k, double r, double s) {
    static std::mutex mu;
    static std::map<std::pair<int, double>, DemeanedKernel> cache;
    const std::pair<int, double> key{static_cast<int>(k.base.id), k.b};
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, DemeanedKernel(k)).first;
    return it->second(r, s);
}

// ---------------------------------------------------------------------------
// Time kernels
// ---------------------------------------------------------------------------

double TimeKernel::eval(double x) const {
    if (x < 0.0 || x > 1.0) return 0.0;
    switch (id) {
        case TimeKernelId::Uniform:
            return 1.0;
        case TimeKernelId::Triangular:
            return x <= 0.5 ? 4.0 * x : 4.0 * (1.0 - x);
        case TimeKernelId::Quartic: {
            const double g = x * (1.0 - x);
            return 30.0 * g * g;
        }
    }
    return 0.0;
}

const char* TimeKernel::name() const {
    switch (id) {
        case TimeKernelId::Uniform: return "uniform";
        case TimeKernelId::Triangular: return "triangular";
        case TimeKernelId::Quartic: return "quartic";
    }
    return "?";
}

TimeKernel make_time_kernel(TimeKernelId id) { return {id}; }

TimeKernel time_kernel_from_name(const std::string& name) {
    const std::string n = lower(name);
    if (n == "uniform") return {TimeKernelId::Uniform};
    if (n == "triangular") return {TimeKernelId::Triangular};
    if (n == "quartic") return {TimeKernelId::Quartic};
    throw Error(ErrorCode::UsageError, "unknown time kernel name: " + name);
}

}  // namespace har
