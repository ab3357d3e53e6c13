#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "har/inference.hpp"
#include "har/numeric.hpp"
#include "har/rng.hpp"
#include "test_util.hpp"

using namespace har;
using test_util::within;

namespace {

SamplePath location_sample(const std::vector<double>& y) {
    SamplePath s;
    s.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<int>(y.size()));
    s.x = Eigen::MatrixXd::Ones(static_cast<int>(y.size()), 1);
    return s;
}

HypothesisSpec location_hypothesis(double r) {
    HypothesisSpec hyp;
    hyp.R = Eigen::MatrixXd::Identity(1, 1);
    hyp.r = Eigen::VectorXd::Constant(1, r);
    return hyp;
}

SamplePath random_sample(int T, int p, Rng& rng) {
    SamplePath s;
    s.x = Eigen::MatrixXd::Ones(T, p);
    for (int c = 1; c < p; ++c) {
        for (int t = 0; t < T; ++t) s.x(t, c) = rng.normal();
    }
    s.y.resize(T);
    for (int t = 0; t < T; ++t) s.y[t] = rng.normal() + 0.4 * s.x.row(t).sum();
    return s;
}

// Hand 2x2 inverse, used to recompute the F statistic independently.
Eigen::Matrix2d invert2(const Eigen::Matrix2d& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Eigen::Matrix2d inv;
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv / det;
}

const std::vector<double> kAlternating{1.0, -1.0, 1.0, -1.0};

}  // namespace

TEST_CASE("t statistic basics and the hand-checkable T = 4 case") {
    const OlsFit fit = ols_fit(location_sample(kAlternating));
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);

    // beta_hat = 0 exactly, so the statistic vanishes under r = 0
    CHECK(t_stat_fixed_b(fit, location_hypothesis(0.0), bt, 1.0) == 0.0);

    // fixed-b variance 1/4 from the partial sums: t = 2 (0 - (-1/2)) / (1/2) = 2
    CHECK(t_stat_fixed_b(fit, location_hypothesis(-0.5), bt, 1.0) ==
          doctest::Approx(2.0).epsilon(1e-12));

    // HAC with Bartlett b_T = 1/3: variance 1/3, t = 1 / sqrt(1/3) = sqrt(3)
    CHECK(t_stat_hac(fit, location_hypothesis(-0.5), bt, 1.0 / 3.0) ==
          doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("doubling y leaves the statistic unchanged") {
    Rng rng(5);
    SamplePath s = location_sample({0.4, -1.1, 2.3, 0.2, -0.8, 1.4, -0.3, 0.6});
    SamplePath doubled = s;
    doubled.y *= 2.0;
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    const HypothesisSpec hyp = location_hypothesis(0.0);
    // scaling by two is exact in floating point, top and bottom
    CHECK(t_stat_fixed_b(ols_fit(s), hyp, bt, 1.0) ==
          t_stat_fixed_b(ols_fit(doubled), hyp, bt, 1.0));
    CHECK(t_stat_hac(ols_fit(s), hyp, bt, 0.25) ==
          t_stat_hac(ols_fit(doubled), hyp, bt, 0.25));
}

TEST_CASE("f equals t squared for one restriction") {
    Rng rng(17);
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    for (int trial = 0; trial < 30; ++trial) {
        const SamplePath s = random_sample(30 + trial, 1 + trial % 2, rng);
        const OlsFit fit = ols_fit(s);
        HypothesisSpec hyp;
        hyp.R = Eigen::MatrixXd::Zero(1, fit.p());
        hyp.R(0, 0) = 1.0;
        hyp.r = Eigen::VectorXd::Constant(1, 0.1);
        const double t = t_stat_fixed_b(fit, hyp, bt, 1.0);
        const double f = f_stat_fixed_b(fit, hyp, bt, 1.0);
        CHECK(f == doctest::Approx(t * t).epsilon(1e-12));
    }
}

TEST_CASE("f statistic against an independent dense recomputation") {
    Rng rng(23);
    const LagKernel pz = make_lag_kernel(LagKernelId::Parzen);
    for (int trial = 0; trial < 20; ++trial) {
        const SamplePath s = random_sample(60, 2, rng);
        const OlsFit fit = ols_fit(s);
        HypothesisSpec hyp;
        hyp.R = Eigen::MatrixXd::Identity(2, 2);
        hyp.r = Eigen::VectorXd::Zero(2);
        const double f = f_stat_fixed_b(fit, hyp, pz, 0.5);

        const Eigen::Matrix2d omega = fixed_b_lrv(fit, pz, 0.5).value;
        const Eigen::Matrix2d qinv = invert2(fit.qhat);
        const Eigen::Matrix2d mid = qinv * omega * qinv;
        const Eigen::Vector2d dev = fit.beta - hyp.r;
        const double oracle = 60.0 * dev.dot(invert2(mid) * dev) / 2.0;
        CHECK(f == doctest::Approx(oracle).epsilon(1e-10));
    }
}

TEST_CASE("f statistic zero when the restriction holds exactly") {
    Rng rng(29);
    const SamplePath s = random_sample(40, 2, rng);
    const OlsFit fit = ols_fit(s);
    HypothesisSpec hyp;
    hyp.R = Eigen::MatrixXd::Identity(2, 2);
    hyp.r = fit.beta;
    CHECK(f_stat_fixed_b(fit, hyp, make_lag_kernel(LagKernelId::Bartlett), 1.0) ==
          doctest::Approx(0.0));
}

TEST_CASE("regressor rescaling with a matching hypothesis leaves t unchanged") {
    Rng rng(31);
    const SamplePath s = random_sample(80, 2, rng);
    SamplePath scaled = s;
    scaled.x.col(1) *= 5.0;
    HypothesisSpec hyp;
    hyp.R = Eigen::MatrixXd::Zero(1, 2);
    hyp.R(0, 1) = 1.0;
    hyp.r = Eigen::VectorXd::Constant(1, 0.0);
    HypothesisSpec hyp_scaled = hyp;
    hyp_scaled.R(0, 1) = 1.0 / 5.0;
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    const double base = t_stat_fixed_b(ols_fit(s), hyp, bt, 1.0);
    const double moved = t_stat_fixed_b(ols_fit(scaled), hyp_scaled, bt, 1.0);
    CHECK(within(moved, base, 1e-10 * (1.0 + std::abs(base))));
}

TEST_CASE("degenerate studentization variance is an error") {
    OlsFit zero;
    zero.beta = Eigen::VectorXd::Zero(1);
    zero.residuals = Eigen::VectorXd::Zero(16);
    zero.score = Eigen::MatrixXd::Zero(16, 1);
    zero.qhat = Eigen::MatrixXd::Identity(1, 1);
    zero.partial_sums = Eigen::MatrixXd::Zero(16, 1);
    auto code = test_util::thrown_code([&] {
        t_stat_fixed_b(zero, location_hypothesis(1.0), make_lag_kernel(LagKernelId::Bartlett),
                       1.0);
    });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::DegenerateVariance);
}

TEST_CASE("hypothesis validation catches rank problems") {
    HypothesisSpec hyp;
    hyp.R = Eigen::MatrixXd::Ones(2, 2);  // rank 1
    hyp.r = Eigen::VectorXd::Zero(2);
    auto code = test_util::thrown_code([&] { hyp.validate(2); });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::OutOfRange);
}

TEST_CASE("decide with the standard source") {
    DecisionContext ctx;
    // never reject at t = 0
    for (double level : {0.5, 0.05, 0.999}) {
        const TestResult r = decide(0.0, StatKind::TFixedB, CvSource::Standard, level, ctx);
        CHECK(!r.reject);
    }
    const TestResult r = decide(2.5, StatKind::THac, CvSource::Standard, 0.05, ctx);
    CHECK(within(r.critical_value, 1.959963985, 5e-6));
    CHECK(r.reject);
    CHECK(r.p_value == doctest::Approx(2.0 * (1.0 - normal_cdf(2.5))).epsilon(1e-10));

    // F against chi-square(q)/q
    DecisionContext ctx2;
    ctx2.q = 2;
    const TestResult rf = decide(1.0, StatKind::FFixedB, CvSource::Standard, 0.05, ctx2);
    CHECK(rf.critical_value == doctest::Approx(chi_square_quantile(0.95, 2) / 2.0));
    CHECK(!rf.reject);

    // degenerate level 1 always rejects a nonzero statistic
    const TestResult r1 = decide(0.3, StatKind::TFixedB, CvSource::Standard, 1.0, ctx);
    CHECK(r1.critical_value == 0.0);
    CHECK(r1.reject);
}

TEST_CASE("decide with the stationary pivotal source is cached and sane") {
    DecisionContext ctx;
    ctx.kernel = make_lag_kernel(LagKernelId::Bartlett);
    ctx.b = 1.0;
    ctx.grid_n = 300;
    ctx.draw_count = 20000;
    ctx.seed = 99;
    const TestResult a = decide(3.0, StatKind::TFixedB, CvSource::StationaryPivotal, 0.05, ctx);
    const TestResult b = decide(5.9, StatKind::TFixedB, CvSource::StationaryPivotal, 0.05, ctx);
    CHECK(a.critical_value == b.critical_value);  // same cached draw set
    CHECK(a.critical_value > 3.0);                // far above the normal quantile
    CHECK(a.critical_value < 7.0);
    CHECK(!a.reject);
    CHECK(b.reject);
    CHECK(a.cv_mc_se > 0.0);
    CHECK(a.p_value > b.p_value);
}

TEST_CASE("decide plug-in path equals the manual pipeline") {
    const DgpSpec spec = test_util::variance_break_dgp(1.0, 4.0);
    const SamplePath sample = simulate(spec, 1000, 1234);
    const OlsFit fit = ols_fit(sample);
    Eigen::VectorXd grid(20);
    for (int i = 0; i < 20; ++i) grid[i] = (i + 0.5) / 20.0;
    const LocalLrvCurve curve =
        local_lrv_curve(fit, grid, default_h1(1000), default_h2(1000),
                        make_lag_kernel(LagKernelId::Parzen),
                        make_time_kernel(TimeKernelId::Quartic));

    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    const double stat = t_stat_fixed_b(fit, location_hypothesis(0.0), bt, 1.0);

    DecisionContext ctx;
    ctx.sigma_curve = &curve;
    ctx.kernel = bt;
    ctx.b = 1.0;
    ctx.grid_n = 400;
    ctx.draw_count = 4000;
    ctx.seed = 321;
    const TestResult via_decide =
        decide(stat, StatKind::TFixedB, CvSource::NonstationaryPlugIn, 0.05, ctx);

    const LimitDrawSet manual =
        plug_in_limit_distribution(curve, {}, bt, 1.0, GridSpec{400}, 4000, 321);
    const CvEstimate cv = two_sided_critical_value(manual, 0.05);
    CHECK(via_decide.critical_value == cv.value);
    CHECK(via_decide.reject == (std::abs(stat) > cv.value));

    // missing context
    DecisionContext empty;
    auto code = test_util::thrown_code([&] {
        decide(stat, StatKind::TFixedB, CvSource::NonstationaryPlugIn, 0.05, empty);
    });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::MissingContext);
}

TEST_CASE("decide squares plug-in t draws for a one-restriction F test") {
    LimitDrawSet set;
    set.statistic = "t";
    set.sigma_source = "plug-in";
    Rng rng(7);
    for (int i = 0; i < 4000; ++i) set.draws.push_back(rng.normal());
    DecisionContext ctx;
    ctx.draws = &set;
    ctx.q = 1;
    const TestResult rf = decide(2.0, StatKind::FFixedB, CvSource::NonstationaryPlugIn,
                                 0.05, ctx);
    std::vector<double> squared = set.sorted_abs();
    for (double& v : squared) v *= v;
    CHECK(rf.critical_value == quantile_type7(squared, 0.95));
}

TEST_CASE("hac test with normal critical values holds its size") {
    const DgpSpec spec = test_util::iid_dgp();
    const int T = 2000;
    const int reps = 10000;
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    const double cv = normal_quantile(0.975);
    const double b_T = 1.0 / std::sqrt(static_cast<double>(T));
    int rejects = 0;
    for (int r = 0; r < reps; ++r) {
        const SamplePath s = simulate(spec, T, derive_seed(864, r));
        const double t = t_stat_hac(ols_fit(s), location_hypothesis(0.0), bt, b_T);
        if (std::abs(t) > cv) ++rejects;
    }
    const double rate = static_cast<double>(rejects) / reps;
    CHECK(rate > 0.035);
    CHECK(rate < 0.065);
}

TEST_CASE("name round trips") {
    CHECK(stat_kind_from_name("t-fixed-b") == StatKind::TFixedB);
    CHECK(stat_kind_from_name("f-fixed-b") == StatKind::FFixedB);
    CHECK(stat_kind_from_name("t-hac") == StatKind::THac);
    CHECK(cv_source_from_name("standard") == CvSource::Standard);
    CHECK(cv_source_from_name("stationary-pivotal") == CvSource::StationaryPivotal);
    CHECK(cv_source_from_name("plug-in") == CvSource::NonstationaryPlugIn);
}
