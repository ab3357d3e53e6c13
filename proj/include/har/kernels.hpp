#pragma once

#include <string>

#include "har/errors.hpp"

namespace har {

// ---------------------------------------------------------------------------
// Lag kernels (weights on lagged autocovariances)
// ---------------------------------------------------------------------------

enum class LagKernelId { Bartlett, Parzen, QuadraticSpectral, TukeyHanning, Truncated };

/// A lag kernel: symmetric, K(0) = 1, |K| <= 1. Objects are immutable and
/// safe for concurrent reads.
///
/// q0 is the Parzen characteristic exponent (order of 1 - K(x) near 0); for
/// the truncated kernel 1 - K vanishes identically near 0, so q0 is reported
/// as INT_MAX. psd marks the kernels whose weighted autocovariance sums are
/// positive semidefinite (Bartlett, Parzen, QS).
struct LagKernel {
    LagKernelId id;
    int q0;
    bool psd;
    bool twice_differentiable;

    double eval(double x) const;

    /// Analytic second derivative on the interior of the support; endpoints
    /// take one-sided limits. Throws UnsupportedKernel for Bartlett and
    /// Truncated.
    double eval_dd(double x) const;

    const char* name() const;
};

LagKernel make_lag_kernel(LagKernelId id);

/// Case-insensitive lookup: "bartlett", "parzen", "qs", "tukey-hanning",
/// "truncated". Throws UsageError on unknown names.
LagKernel lag_kernel_from_name(const std::string& name);

double eval_lag_kernel(const LagKernel& k, double x);
double eval_lag_kernel_dd(const LagKernel& k, double x);
int parzen_exponent(const LagKernel& k);

/// Scaled second difference T^2 [ (K((m+1)/T) - K(m/T)) - (K(m/T) - K((m-1)/T)) ]
/// with m = floor(T r); converges to K''(r) as T grows.
double discrete_second_difference(const LagKernel& k, long T, double r);

/// Integral of |K| over the real line (closed form where available, numeric
/// for QS). Enters the cumulant bounds and the expansion bandwidth check.
double abs_integral(const LagKernel& k);

// ---------------------------------------------------------------------------
// Bandwidthed kernel K_b(x) = K(x / b) and its demeaned version
// ---------------------------------------------------------------------------

struct BandwidthedKernel {
    LagKernel base;
    double b;  // in (0, 1]

    double eval(double x) const { return base.eval(x / b); }
};

BandwidthedKernel make_bandwidthed(LagKernelId id, double b);

/// Doubly demeaned kernel on [0,1]^2:
///   K_b(r-s) - int_0^1 K_b(r-t) dt - int_0^1 K_b(tau-s) dtau
///            + int_0^1 int_0^1 K_b(t-tau) dt dtau.
/// The edge integral has a closed form for Bartlett and is computed by
/// adaptive quadrature (abs tol 1e-10) otherwise; the double integral is a
/// constant and is computed once on construction.
class DemeanedKernel {
  public:
    explicit DemeanedKernel(BandwidthedKernel kb);

    double operator()(double r, double s) const;
    double edge_integral(double r) const;  // int_0^1 K_b(r - t) dt
    double double_integral() const { return double_integral_; }
    const BandwidthedKernel& bandwidthed() const { return kb_; }

  private:
    BandwidthedKernel kb_;
    double double_integral_;
};

/// One-shot evaluation; the per-(kernel, b) double integral is cached behind
/// the scenes. Prefer constructing a DemeanedKernel when evaluating on grids.
double demeaned_kernel(const BandwidthedKernel& k, double r, double s);

// ---------------------------------------------------------------------------
// Time-smoothing kernels, supported on [0,1], symmetric about 1/2, unit mass
// ---------------------------------------------------------------------------

enum class TimeKernelId { Uniform, Triangular, Quartic };

struct TimeKernel {
    TimeKernelId id;

    double eval(double x) const;
    const char* name() const;
};

TimeKernel make_time_kernel(TimeKernelId id);
TimeKernel time_kernel_from_name(const std::string& name);

}  // namespace har
