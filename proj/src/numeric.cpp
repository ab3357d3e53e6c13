#include "har/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "har/errors.hpp"

namespace har {

namespace {

double simpson(const std::function<double(double)>& f, double a, double fa,
               double b, double fb, double m, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_step(const std::function<double(double)>& f, double a, double fa,
                     double b, double fb, double m, double fm, double whole,
                     double tol, int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(f, a, fa, m, fm, lm, flm);
    const double right = simpson(f, m, fm, b, fb, rm, frm);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
           adaptive_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol) {
    if (a == b) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fb = f(b), fm = f(m);
    const double whole = simpson(f, a, fa, b, fb, m, fm);
    return adaptive_step(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

double integrate_piecewise(const std::function<double(double)>& f, double a,
                           double b, const std::vector<double>& split_points,
                           double tol) {
    std::vector<double> knots;
    knots.push_back(a);
    for (double s : split_points) {
        if (s > a && s < b) knots.push_back(s);
    }
    knots.push_back(b);
    std::sort(knots.begin(), knots.end());
    double total = 0.0;
    const double per_piece = tol / static_cast<double>(knots.size());
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        total += integrate(f, knots[i], knots[i + 1], per_piece);
    }
    return total;
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::OutOfRange, "normal_quantile: p must lie in (0,1)");
    }
    // Acklam's rational approximation, then one Halley refinement off erfc.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
    return x;
}

namespace {

// Regularized lower incomplete gamma, series branch (x < a + 1).
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail Q(a,x) via Lentz continued fraction (x >= a + 1).
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double chi_square_cdf(double x, double df) {
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * df, 0.5 * x);
}

double chi_square_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCode::OutOfRange, "chi_square_quantile: p must lie in (0,1)");
    }
    // Bracket then bisect; plenty fast for the handful of calls we make.
    double lo = 0.0;
    double hi = df + 10.0;
    while (chi_square_cdf(hi, df) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (chi_square_cdf(mid, df) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo < 1e-13 * (1.0 + hi)) break;
    }
    return 0.5 * (lo + hi);
}

double chi1_cdf_derivative(double x, int order) {
    if (order == 0) {
        if (x <= 0.0) return 0.0;
        return std::erf(std::sqrt(0.5 * x));
    }
    if (x <= 0.0) {
        throw Error(ErrorCode::OutOfRange, "chi1_cdf_derivative: derivatives need x > 0");
    }
    // pdf f(x) = x^{-1/2} e^{-x/2} / sqrt(2 pi); higher orders follow from
    // f'(x) = f(x) * (-1/(2x) - 1/2) applied repeatedly.
    const double f = std::exp(-0.5 * x) / std::sqrt(2.0 * M_PI * x);
    const double ix = 1.0 / x;
    switch (order) {
        case 1:
            return f;
        case 2:
            return -0.5 * f * (1.0 + ix);
        case 3:
            return f * (0.25 + 0.5 * ix + 0.75 * ix * ix);
        case 4:
            return -0.125 * f * (1.0 + 3.0 * ix + 9.0 * ix * ix + 15.0 * ix * ix * ix);
        default:
            throw Error(ErrorCode::OutOfRange, "chi1_cdf_derivative: order must be 0..4");
    }
}

double quantile_type7(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) {
        throw Error(ErrorCode::TooFewDraws, "quantile_type7: empty sample");
    }
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double quantile_mc_se(const std::vector<double>& sorted, double p) {
    const double n = static_cast<double>(sorted.size());
    const double rank = p * (n - 1.0);
    const double half_width = std::sqrt(n * p * (1.0 - p));
    const auto clamp_idx = [&](double r) {
        return static_cast<std::size_t>(
            std::min(n - 1.0, std::max(0.0, std::round(r))));
    };
    const double hi = sorted[clamp_idx(rank + half_width)];
    const double lo = sorted[clamp_idx(rank - half_width)];
    return 0.5 * (hi - lo);
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) {
            ++i;
        } else {
            ++j;
        }
        d = std::max(d, std::abs(static_cast<double>(i) / na -
                                 static_cast<double>(j) / nb));
    }
    return d;
}

}  // namespace har
