#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "har/dgp.hpp"
#include "har/rng.hpp"
#include "test_util.hpp"

using namespace har;
using test_util::within;

namespace {

DgpSpec load_spec(const std::string& name) {
    std::ifstream in(std::string(HAR_SOURCE_DIR) + "/data/specs/" + name);
    REQUIRE(in.good());
    nlohmann::json j;
    in >> j;
    return dgp_from_json(j);
}

// Truncated geometric-sum long-run variance of a stationary AR(1):
// sum_k rho^{|k|} sigma^2 / (1 - rho^2).
double geometric_sum_lrv(double rho, double sigma2) {
    const double gamma0 = sigma2 / (1.0 - rho * rho);
    double total = gamma0;
    double g = gamma0;
    for (int k = 1; k < 200; ++k) {
        g *= rho;
        total += 2.0 * g;
    }
    return total;
}

}  // namespace

TEST_CASE("simulate: iid sample mean near the intercept") {
    const DgpSpec spec = test_util::location_dgp(ScalarPath(0.0), ScalarPath(1.0), 2.0);
    const SamplePath s = simulate(spec, 100, 42);
    CHECK(within(s.y.mean(), 2.0, 4.0 / std::sqrt(100.0)));
}

TEST_CASE("simulate: identical seed gives identical bytes") {
    const DgpSpec spec = load_spec("dgp_ar1_rho05.json");
    const SamplePath a = simulate(spec, 257, 99);
    const SamplePath b = simulate(spec, 257, 99);
    REQUIRE(a.T() == b.T());
    for (int t = 0; t < a.T(); ++t) {
        CHECK(a.y[t] == b.y[t]);
    }
    const SamplePath c = simulate(spec, 257, 100);
    bool all_same = true;
    for (int t = 0; t < a.T(); ++t) all_same = all_same && (a.y[t] == c.y[t]);
    CHECK(!all_same);
}

TEST_CASE("simulate: variance break shows up in half-sample variances") {
    const DgpSpec spec = test_util::variance_break_dgp(1.0, 4.0);
    const SamplePath s = simulate(spec, 2000, 7);
    const int half = 1000;
    double v1 = 0.0, v2 = 0.0;
    for (int t = 0; t < half; ++t) v1 += s.y[t] * s.y[t];
    for (int t = half; t < 2000; ++t) v2 += s.y[t] * s.y[t];
    const double ratio = v2 / v1;
    CHECK(ratio > 2.5);
    CHECK(ratio < 6.0);
}

TEST_CASE("simulate rejects invalid specs") {
    DgpSpec bad = test_util::location_dgp(ScalarPath(1.2), ScalarPath(1.0));
    auto code = test_util::thrown_code([&] { simulate(bad, 100, 1); });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::InvalidSpec);
}

TEST_CASE("local long-run variance closed forms") {
    CHECK(local_lrv(test_util::iid_dgp(), 0.3)(0, 0) == 1.0);

    const DgpSpec ar = test_util::ar1_dgp(0.5);
    CHECK(local_lrv(ar, 0.5)(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
    // geometric-sum oracle
    CHECK(local_lrv(ar, 0.5)(0, 0) ==
          doctest::Approx(geometric_sum_lrv(0.5, 1.0)).epsilon(1e-10));

    const DgpSpec vb = test_util::variance_break_dgp(1.0, 4.0);
    CHECK(local_lrv(vb, 0.25)(0, 0) == 1.0);
    CHECK(local_lrv(vb, 0.75)(0, 0) == 4.0);

    auto code = test_util::thrown_code([&] { local_lrv(vb, 0.5); });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::BreakPoint);
}

TEST_CASE("integrated long-run variance") {
    CHECK(integrated_lrv(test_util::variance_break_dgp(1.0, 4.0))(0, 0) ==
          doctest::Approx(2.5).epsilon(1e-9));
    CHECK(integrated_lrv(test_util::ar1_dgp(0.5))(0, 0) ==
          doctest::Approx(4.0).epsilon(1e-9));
    // rho break: segment-wise oracle (1 + 4) / 2
    const DgpSpec rb = load_spec("dgp_rhobreak.json");
    CHECK(integrated_lrv(rb)(0, 0) == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("exact scaled sum variance") {
    const DgpSpec iid = test_util::iid_dgp();
    for (int T : {17, 100, 513}) {
        CHECK(exact_scaled_sum_variance(iid, T)(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
    }
    CHECK(std::abs(exact_scaled_sum_variance(test_util::ar1_dgp(0.5), 2000)(0, 0) - 4.0) <
          0.005 * 4.0);
    CHECK(std::abs(
              exact_scaled_sum_variance(test_util::variance_break_dgp(1.0, 4.0), 2000)(0, 0) -
              2.5) < 0.005 * 2.5);

    auto code = test_util::thrown_code(
        [&] { exact_scaled_sum_variance(iid, 5001); });
    REQUIRE(code.has_value());
    CHECK(*code == ErrorCode::TooLarge);
}

TEST_CASE("finite-T gap roughly halves when T doubles") {
    for (const char* name :
         {"dgp_ar1_rho05.json", "dgp_varbreak_1to4.json", "dgp_rhobreak.json"}) {
        const DgpSpec spec = load_spec(name);
        const double omega = integrated_lrv(spec)(0, 0);
        double prev_gap = 0.0;
        int idx = 0;
        for (int T : {500, 1000, 2000}) {
            const double gap = std::abs(exact_scaled_sum_variance(spec, T)(0, 0) - omega);
            if (idx > 0) {
                const double ratio = gap / prev_gap;
                CHECK(ratio > 0.35);
                CHECK(ratio < 0.65);
            }
            prev_gap = gap;
            ++idx;
        }
    }
}

TEST_CASE("sqrt(T) (beta_hat - beta) variance matches the sandwich limit") {
    // All shipped specs; 10,000 replications at T = 2000, 5% tolerance.
    for (const char* name :
         {"dgp_iid.json", "dgp_ar1_rho05.json", "dgp_varbreak_1to4.json",
          "dgp_varbreak_1to8.json", "dgp_rhobreak.json", "dgp_regression_ar1.json"}) {
        const DgpSpec spec = load_spec(name);
        const int T = 2000;
        const int reps = 10000;
        const int p = spec.p();
        const Eigen::MatrixXd qbar = moment_path(spec).integrated();
        const Eigen::MatrixXd qinv = qbar.inverse();
        const Eigen::MatrixXd target = qinv * integrated_lrv(spec) * qinv;

        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p);
        Eigen::MatrixXd sum_sq = Eigen::MatrixXd::Zero(p, p);
        std::vector<Eigen::VectorXd> devs;
        devs.reserve(reps);
        for (int r = 0; r < reps; ++r) {
            const SamplePath s = simulate(spec, T, derive_seed(2026, r));
            const Eigen::VectorXd beta =
                (s.x.transpose() * s.x).ldlt().solve(s.x.transpose() * s.y);
            devs.push_back(std::sqrt(static_cast<double>(T)) * (beta - spec.beta0));
        }
        Eigen::VectorXd mean_dev = Eigen::VectorXd::Zero(p);
        for (const auto& d : devs) mean_dev += d;
        mean_dev /= static_cast<double>(reps);
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
        for (const auto& d : devs) {
            cov += (d - mean_dev) * (d - mean_dev).transpose();
        }
        cov /= static_cast<double>(reps - 1);
        const double rel = (cov - target).norm() / target.norm();
        INFO("spec ", name, " rel err ", rel);
        CHECK(rel < 0.05);
    }
}

TEST_CASE("dgp json round trip") {
    for (const char* name : {"dgp_varbreak_1to4.json", "dgp_regression_ar1.json"}) {
        const DgpSpec spec = load_spec(name);
        const DgpSpec again = dgp_from_json(dgp_to_json(spec));
        CHECK(again.p() == spec.p());
        const SamplePath a = simulate(spec, 100, 5);
        const SamplePath b = simulate(again, 100, 5);
        for (int t = 0; t < 100; ++t) CHECK(a.y[t] == b.y[t]);
    }
}

TEST_CASE("sample csv round trip") {
    const DgpSpec spec = load_spec("dgp_regression_ar1.json");
    const SamplePath s = simulate(spec, 60, 11);
    std::stringstream ss;
    write_sample_csv(ss, s);
    const SamplePath back = read_sample_csv(ss);
    REQUIRE(back.T() == s.T());
    REQUIRE(back.p() == s.p());
    for (int t = 0; t < s.T(); ++t) {
        CHECK(back.y[t] == s.y[t]);
        for (int c = 0; c < s.p(); ++c) CHECK(back.x(t, c) == s.x(t, c));
    }
}

TEST_CASE("regression model oracles are internally consistent") {
    const DgpSpec spec = load_spec("dgp_regression_ar1.json");
    // local curves integrate to the integrated values
    const Eigen::MatrixXd omega = integrated_lrv(spec);
    CHECK(omega(0, 0) == doctest::Approx(1.0 / (0.7 * 0.7)).epsilon(1e-9));
    CHECK(omega(0, 1) == doctest::Approx(omega(0, 0)).epsilon(1e-9));  // mean 1 regressor
    // exact finite-T variance approaches the integrated value
    const Eigen::MatrixXd exact = exact_scaled_sum_variance(spec, 3000);
    CHECK((exact - omega).norm() / omega.norm() < 0.01);
    // Q path: Var(z) = 1 / (1 - 0.25), mean 1
    const Eigen::MatrixXd qbar = moment_path(spec).integrated();
    CHECK(qbar(0, 0) == doctest::Approx(1.0));
    CHECK(qbar(0, 1) == doctest::Approx(1.0));
    CHECK(qbar(1, 1) == doctest::Approx(1.0 + 4.0 / 3.0).epsilon(1e-9));
}

TEST_CASE("variance path of a piecewise-constant spec keeps closed forms") {
    const DgpSpec spec = load_spec("dgp_varbreak_1to4.json");
    const VariancePath path = variance_path(spec);
    CHECK(path.is_scalar());
    CHECK(path.scalar_value(0.25) == 1.0);
    CHECK(path.scalar_value(0.75) == 4.0);
    CHECK(path.scalar_value(0.5) == 4.0);  // right-continuous at the break
    CHECK(path.scalar_integrated() == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(path.scalar_sup() == 4.0);
}
