#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "har/kernels.hpp"
#include "har/numeric.hpp"
#include "har/rng.hpp"
#include "test_util.hpp"

using namespace har;

namespace {

const LagKernelId kAllKernels[] = {LagKernelId::Bartlett, LagKernelId::Parzen,
                                   LagKernelId::QuadraticSpectral,
                                   LagKernelId::TukeyHanning, LagKernelId::Truncated};

const LagKernelId kPsdKernels[] = {LagKernelId::Bartlett, LagKernelId::Parzen,
                                   LagKernelId::QuadraticSpectral};

double central_second_difference(const LagKernel& k, double x, double h) {
    return (k.eval(x + h) - 2.0 * k.eval(x) + k.eval(x - h)) / (h * h);
}

}  // namespace

TEST_CASE("lag kernel point values") {
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    CHECK(bt.eval(0.0) == 1.0);
    CHECK(bt.eval(0.5) == 0.5);
    CHECK(bt.eval(-0.5) == 0.5);
    CHECK(bt.eval(1.5) == 0.0);

    const LagKernel tr = make_lag_kernel(LagKernelId::Truncated);
    CHECK(tr.eval(2.0) == 0.0);
    CHECK(tr.eval(0.7) == 1.0);

    const LagKernel pz = make_lag_kernel(LagKernelId::Parzen);
    CHECK(pz.eval(0.0) == 1.0);
    // continuity at the piece boundary
    CHECK(pz.eval(0.5) == doctest::Approx(0.25).epsilon(1e-14));

    const LagKernel qs = make_lag_kernel(LagKernelId::QuadraticSpectral);
    CHECK(qs.eval(0.0) == 1.0);
    // no jump where the small-argument series hands over to the closed form
    const double x_switch = 0.01 / (6.0 * M_PI / 5.0);
    CHECK(test_util::within(qs.eval(x_switch * 0.999), qs.eval(x_switch * 1.001), 1e-6));

    const LagKernel th = make_lag_kernel(LagKernelId::TukeyHanning);
    CHECK(th.eval(0.0) == 1.0);
    CHECK(th.eval(1.0) == doctest::Approx(0.0));
    CHECK(th.eval(0.5) == doctest::Approx(0.5));
}

TEST_CASE("kernel symmetry and boundedness on random points") {
    Rng rng(2024);
    for (LagKernelId id : kAllKernels) {
        const LagKernel k = make_lag_kernel(id);
        for (int i = 0; i < 1000; ++i) {
            const double x = 3.0 * (2.0 * rng.uniform() - 1.0);
            CHECK(k.eval(x) == k.eval(-x));
            CHECK(std::abs(k.eval(x)) <= 1.0);
        }
    }
}

TEST_CASE("parzen characteristic exponents") {
    CHECK(parzen_exponent(make_lag_kernel(LagKernelId::Bartlett)) == 1);
    CHECK(parzen_exponent(make_lag_kernel(LagKernelId::Parzen)) == 2);
    CHECK(parzen_exponent(make_lag_kernel(LagKernelId::QuadraticSpectral)) == 2);
}

TEST_CASE("psd flags match the kernel set") {
    CHECK(make_lag_kernel(LagKernelId::Bartlett).psd);
    CHECK(make_lag_kernel(LagKernelId::Parzen).psd);
    CHECK(make_lag_kernel(LagKernelId::QuadraticSpectral).psd);
    CHECK(!make_lag_kernel(LagKernelId::TukeyHanning).psd);
    CHECK(!make_lag_kernel(LagKernelId::Truncated).psd);
}

TEST_CASE("second derivatives match finite differences") {
    Rng rng(99);
    for (LagKernelId id : {LagKernelId::Parzen, LagKernelId::QuadraticSpectral,
                           LagKernelId::TukeyHanning}) {
        const LagKernel k = make_lag_kernel(id);
        for (int i = 0; i < 60; ++i) {
            double x = 0.02 + 0.96 * rng.uniform();
            // K'' is only piecewise smooth at the Parzen joint and the
            // Tukey-Hanning support edge; step over those kinks
            if (id == LagKernelId::Parzen && std::abs(x - 0.5) < 2e-3) continue;
            if (id == LagKernelId::TukeyHanning && x > 0.998) continue;
            // step 1e-4: big enough that double-precision roundoff in the
            // second difference stays well below the 1e-6 tolerance
            const double fd = central_second_difference(k, x, 1e-4);
            CHECK(test_util::within(k.eval_dd(x), fd, 1e-6));
        }
    }
}

TEST_CASE("second derivative unsupported for bartlett and truncated") {
    auto bt = test_util::thrown_code(
        [] { make_lag_kernel(LagKernelId::Bartlett).eval_dd(0.0); });
    REQUIRE(bt.has_value());
    CHECK(*bt == ErrorCode::UnsupportedKernel);
    auto tr = test_util::thrown_code(
        [] { make_lag_kernel(LagKernelId::Truncated).eval_dd(0.3); });
    REQUIRE(tr.has_value());
    CHECK(*tr == ErrorCode::UnsupportedKernel);
}

TEST_CASE("discrete second difference converges to the second derivative") {
    const LagKernel qs = make_lag_kernel(LagKernelId::QuadraticSpectral);
    CHECK(test_util::within(discrete_second_difference(qs, 100000, 0.3),
                            qs.eval_dd(0.3), 1e-3));

    // Error decreasing in T while truncation still dominates roundoff
    // (the difference quotient multiplies rounding noise by T^2).
    double prev_err = 1e9;
    for (long T : {100L, 400L, 1600L}) {
        const double err = std::abs(discrete_second_difference(qs, T, 0.3) - qs.eval_dd(0.3));
        CHECK(err < prev_err);
        prev_err = err;
    }
    const LagKernel pz = make_lag_kernel(LagKernelId::Parzen);
    CHECK(test_util::within(discrete_second_difference(pz, 100000, 0.3),
                            pz.eval_dd(0.3), 1e-3));

    // Symmetry: exact when T r is an integer, to discretization error otherwise.
    CHECK(discrete_second_difference(qs, 100000, -0.25) ==
          discrete_second_difference(qs, 100000, 0.25));
    CHECK(test_util::within(discrete_second_difference(qs, 100000, -0.3),
                            discrete_second_difference(qs, 100000, 0.3), 1e-4));

    auto code = test_util::thrown_code([&] { discrete_second_difference(pz, 2, 0.3); });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::OutOfRange);
}

TEST_CASE("demeaned bartlett kernel diagonal has the closed form") {
    const BandwidthedKernel kb = make_bandwidthed(LagKernelId::Bartlett, 1.0);
    for (double s : {0.0, 0.1, 0.25, 0.5, 0.77, 1.0}) {
        const double expected = (s * s + (1.0 - s) * (1.0 - s)) - 1.0 / 3.0;
        CHECK(demeaned_kernel(kb, s, s) == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(demeaned_kernel(kb, 0.0, 0.0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("demeaned kernel symmetry and zero row integral") {
    Rng rng(5);
    for (LagKernelId id : kPsdKernels) {
        for (double b : {1.0, 0.4}) {
            const BandwidthedKernel kb = make_bandwidthed(id, b);
            const DemeanedKernel dk(kb);
            for (int i = 0; i < 20; ++i) {
                const double r = rng.uniform();
                const double s = rng.uniform();
                CHECK(test_util::within(dk(r, s), dk(s, r), 1e-9));
            }
            for (double s : {0.0, 0.3, 0.9}) {
                const double row =
                    integrate([&](double r) { return dk(r, s); }, 0.0, 1.0, 1e-10);
                CHECK(test_util::within(row, 0.0, 1e-8));
            }
        }
    }
}

TEST_CASE("psd kernels produce psd gram matrices") {
    Rng rng(31);
    for (LagKernelId id : kPsdKernels) {
        const LagKernel k = make_lag_kernel(id);
        for (int trial = 0; trial < 50; ++trial) {
            const int m = 20;
            std::vector<double> xs(m);
            for (double& x : xs) x = 4.0 * (2.0 * rng.uniform() - 1.0);
            Eigen::MatrixXd gram(m, m);
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < m; ++j) gram(i, j) = k.eval(xs[i] - xs[j]);
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
            CHECK(es.eigenvalues().minCoeff() >= -1e-9);
        }
    }
}

TEST_CASE("demeaned kernel gram matrices are psd") {
    Rng rng(77);
    for (LagKernelId id : kPsdKernels) {
        for (double b : {1.0, 0.3}) {
            const DemeanedKernel dk(make_bandwidthed(id, b));
            for (int trial = 0; trial < 10; ++trial) {
                const int m = 15;
                std::vector<double> xs(m);
                for (double& x : xs) x = rng.uniform();
                Eigen::MatrixXd gram(m, m);
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < m; ++j) gram(i, j) = dk(xs[i], xs[j]);
                }
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
                CHECK(es.eigenvalues().minCoeff() >= -1e-8);
            }
        }
    }
}

TEST_CASE("time kernels integrate to one and are symmetric about 1/2") {
    for (TimeKernelId id :
         {TimeKernelId::Uniform, TimeKernelId::Triangular, TimeKernelId::Quartic}) {
        const TimeKernel k = make_time_kernel(id);
        const double mass = integrate([&](double x) { return k.eval(x); }, 0.0, 1.0, 1e-10);
        CHECK(test_util::within(mass, 1.0, 1e-8));
        Rng rng(11);
        for (int i = 0; i < 200; ++i) {
            const double x = rng.uniform();
            CHECK(k.eval(x) == doctest::Approx(k.eval(1.0 - x)).epsilon(1e-12));
            CHECK(k.eval(x) >= 0.0);
        }
        CHECK(k.eval(-0.2) == 0.0);
        CHECK(k.eval(1.2) == 0.0);
    }
}

TEST_CASE("kernel name lookup is case insensitive") {
    CHECK(lag_kernel_from_name("Bartlett").id == LagKernelId::Bartlett);
    CHECK(lag_kernel_from_name("QS").id == LagKernelId::QuadraticSpectral);
    CHECK(lag_kernel_from_name("Tukey-Hanning").id == LagKernelId::TukeyHanning);
    CHECK(time_kernel_from_name("UNIFORM").id == TimeKernelId::Uniform);
    auto code = test_util::thrown_code([] { lag_kernel_from_name("nope"); });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::UsageError);
}

TEST_CASE("abs integral closed forms") {
    CHECK(abs_integral(make_lag_kernel(LagKernelId::Bartlett)) == 1.0);
    CHECK(abs_integral(make_lag_kernel(LagKernelId::Parzen)) == 0.75);
    CHECK(abs_integral(make_lag_kernel(LagKernelId::TukeyHanning)) == 1.0);
    // QS is numeric; it exceeds 1 because of the side lobes
    const double qs = abs_integral(make_lag_kernel(LagKernelId::QuadraticSpectral));
    CHECK(qs > 1.0);
    CHECK(qs < 1.7);
}
