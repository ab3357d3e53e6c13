// Acceptance suite: end-to-end checks of the library's statistical claims,
// one printed line per criterion. Usage:
//   acceptance <cli-binary> <source-root> [criterion-number]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "har/harness.hpp"
#include "har/io.hpp"
#include "har/numeric.hpp"
#include "har/rng.hpp"

namespace {

namespace fs = std::filesystem;
using namespace har;

std::string g_cli;
std::string g_root;

// ---------------------------------------------------------------------------
// small helpers
// ---------------------------------------------------------------------------

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double mean_se(const std::vector<double>& v) {
    return std::sqrt(sample_variance(v) / static_cast<double>(v.size()));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

VariancePath unit_path() { return MatrixPath::scalar(ScalarPath(1.0)); }

VariancePath break_path(double lo, double hi) {
    return MatrixPath::scalar(ScalarPath({{0.0, 0.5, lo, lo}, {0.5, 1.0, hi, hi}}));
}

DgpSpec location_iid() {
    DgpSpec spec;
    spec.beta0 = Eigen::VectorXd::Zero(1);
    return spec;
}

DgpSpec location_ar1(double rho) {
    DgpSpec spec;
    spec.beta0 = Eigen::VectorXd::Zero(1);
    spec.error_rho = ScalarPath(rho);
    return spec;
}

const Eigen::MatrixXd kR1 = Eigen::MatrixXd::Identity(1, 1);

// Independently coded stationary simulator (Bartlett, b = 1): own RNG, own
// Gaussian transform, stationarity hard-wired.
class IndependentKvb {
  public:
    explicit IndependentKvb(unsigned long long seed) : state_(seed) {}

    double abs_t_draw(int n) {
        std::vector<double> w(n + 1, 0.0);
        const double sd = std::sqrt(1.0 / static_cast<double>(n));
        for (int i = 1; i <= n; ++i) w[i] = w[i - 1] + sd * gauss();
        double denom = 0.0;
        for (int i = 0; i < n; ++i) {
            const double bridge = w[i] - (static_cast<double>(i) / n) * w[n];
            denom += bridge * bridge;
        }
        denom *= 2.0 / static_cast<double>(n);
        return std::abs(w[n]) / std::sqrt(denom);
    }

  private:
    unsigned long long state_;
    bool have_ = false;
    double cached_ = 0.0;

    double uniform() {
        state_ += 0x9E3779B97F4A7C15ULL;
        unsigned long long z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= (z >> 31);
        return static_cast<double>(z >> 11) * 0x1.0p-53;
    }

    double gauss() {
        if (have_) {
            have_ = false;
            return cached_;
        }
        const double u1 = std::max(uniform(), 1e-300);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        cached_ = r * std::sin(2.0 * M_PI * u2);
        have_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
};

int run_cli(const std::vector<std::string>& args) {
    std::string cmd = g_cli;
    for (const auto& a : args) cmd += " " + a;
    return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "<missing:" + path + ">";
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

bool criterion_1(std::string& detail) {
    // fixed_b_lrv(Bartlett, b = 1) equals the partial-sum form, 1e-10 relative,
    // on 100 random fits.
    Rng rng(101);
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int T = 20 + (trial % 17) * 11;
        const int p = 1 + trial % 3;
        SamplePath s;
        s.x = Eigen::MatrixXd::Ones(T, p);
        for (int c = 1; c < p; ++c) {
            for (int t = 0; t < T; ++t) s.x(t, c) = rng.normal();
        }
        s.y.resize(T);
        for (int t = 0; t < T; ++t) s.y[t] = rng.normal() + 0.2 * s.x.row(t).sum();
        const OlsFit fit = ols_fit(s);
        const Eigen::MatrixXd lag_sum = fixed_b_lrv(fit, bt, 1.0).value;
        const Eigen::MatrixXd partial = bartlett_partial_sum_lrv(fit).value;
        const double rel = (lag_sum - partial).cwiseAbs().maxCoeff() /
                           (1e-300 + partial.cwiseAbs().maxCoeff());
        worst = std::max(worst, rel);
    }
    std::ostringstream os;
    os << "max relative gap " << worst;
    detail = os.str();
    return worst <= 1e-10;
}

bool criterion_2(std::string& detail) {
    // Quadrature anchor 1/3 and the Monte Carlo mean of the squared-bridge
    // limit draws.
    const double mu = fixed_b_limit_mean(make_bandwidthed(LagKernelId::Bartlett, 1.0),
                                         unit_path());
    if (std::abs(mu - 1.0 / 3.0) > 1e-6) {
        detail = "quadrature mean " + std::to_string(mu);
        return false;
    }
    const GridSpec grid{1000};
    std::vector<double> draws;
    draws.reserve(50000);
    for (int d = 0; d < 50000; ++d) {
        draws.push_back(
            draw_lrv_limit_bartlett_form(unit_path(), unit_path(), grid, derive_seed(2, d))(0, 0));
    }
    const double m = mean(draws);
    const double se = mean_se(draws);
    std::ostringstream os;
    os << "quadrature " << mu << ", mc mean " << m << " (se " << se << ")";
    detail = os.str();
    return std::abs(m - 1.0 / 3.0) <= 3.0 * se;
}

bool criterion_3(std::string& detail) {
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    const GridSpec grid{1000};

    // Draw-identity across power-of-two nuisance constants (exact in IEEE),
    // and cancellation to rounding for arbitrary constants.
    const VariancePath s4 = MatrixPath::scalar(ScalarPath(4.0));
    const VariancePath s3 = MatrixPath::scalar(ScalarPath(3.0));
    for (int d = 0; d < 2000; ++d) {
        const std::uint64_t seed = derive_seed(3, d);
        const double base = limit_t_draw(bt, 1.0, unit_path(), unit_path(), kR1, grid, seed);
        const double pow2 = limit_t_draw(bt, 1.0, s4, s4, kR1, grid, seed);
        if (base != pow2) {
            detail = "power-of-two scaling changed a draw";
            return false;
        }
        const double other = limit_t_draw(bt, 1.0, s3, s3, kR1, grid, seed);
        if (std::abs(other - base) > 1e-12 * (1.0 + std::abs(base))) {
            detail = "constant nuisance parameters failed to cancel";
            return false;
        }
    }

    // 97.5% quantile against the independently coded stationary simulator.
    const int draws = 100000;
    const LimitDrawSet lib = simulate_limit_t_draws(bt, 1.0, unit_path(), unit_path(), kR1,
                                                    grid, draws, 33);
    IndependentKvb oracle(909090);
    std::vector<double> other;
    other.reserve(draws);
    for (int d = 0; d < draws; ++d) other.push_back(oracle.abs_t_draw(1000));
    std::sort(other.begin(), other.end());
    const double q_lib = quantile_type7(lib.sorted_abs(), 0.975);
    const double q_oracle = quantile_type7(other, 0.975);
    const double rel = std::abs(q_lib - q_oracle) / q_oracle;
    std::ostringstream os;
    os << "97.5% quantile " << q_lib << " vs independent " << q_oracle << " (rel " << rel
       << ")";
    detail = os.str();
    return rel < 0.02;
}

bool criterion_4(std::string& detail) {
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    const GridSpec grid{1000};
    const int draws = 100000;
    const LimitDrawSet stat = simulate_limit_t_draws(bt, 1.0, unit_path(), unit_path(), kR1,
                                                     grid, draws, 41);
    const LimitDrawSet brk = simulate_limit_t_draws(bt, 1.0, break_path(1.0, 4.0),
                                                    unit_path(), kR1, grid, draws, 42);
    const std::vector<double> a = stat.sorted_abs();
    const std::vector<double> b = brk.sorted_abs();
    const double qa = quantile_type7(a, 0.975);
    const double qb = quantile_type7(b, 0.975);
    const double joint = std::hypot(quantile_mc_se(a, 0.975), quantile_mc_se(b, 0.975));
    std::ostringstream os;
    os << "stationary " << qa << " vs variance-break " << qb << " (joint se " << joint
       << ")";
    detail = os.str();
    return std::abs(qa - qb) > 5.0 * joint;
}

bool criterion_5(std::string& detail) {
    // HAC consistency at T = 5000 and the size of the HAC t test.
    const DgpSpec ar = location_ar1(0.5);
    const LagKernel bt = make_lag_kernel(LagKernelId::Bartlett);
    std::vector<double> estimates;
    for (int r = 0; r < 200; ++r) {
        const SamplePath s = simulate(ar, 5000, derive_seed(51, r));
        estimates.push_back(hac_lrv(ols_fit(s), bt, 1.0 / std::sqrt(5000.0)).value(0, 0));
    }
    const double med = median(estimates);
    if (std::abs(med - 4.0) > 0.2 * 4.0) {
        detail = "median HAC estimate " + std::to_string(med);
        return false;
    }

    const DgpSpec iid = location_iid();
    HypothesisSpec hyp;
    hyp.R = kR1;
    hyp.r = Eigen::VectorXd::Zero(1);
    const double cv = normal_quantile(0.975);
    int rejects = 0;
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
        const SamplePath s = simulate(iid, 2000, derive_seed(52, r));
        const double t = t_stat_hac(ols_fit(s), hyp, bt, 1.0 / std::sqrt(2000.0));
        if (std::abs(t) > cv) ++rejects;
    }
    const double rate = static_cast<double>(rejects) / reps;
    std::ostringstream os;
    os << "median HAC " << med << ", t_HAC size " << 100.0 * rate << "%";
    detail = os.str();
    return rate >= 0.035 && rate <= 0.065;
}

bool criterion_6(std::string& detail) {
    std::ifstream in(g_root + "/data/specs/experiment_erp_varbreak.json");
    if (!in) {
        detail = "missing experiment spec";
        return false;
    }
    nlohmann::json j;
    in >> j;
    const ExperimentSpec spec = experiment_from_json(j);
    const ErpCurve curve = run_erp_study(spec);

    auto rows_for = [&](const std::string& config) {
        std::vector<ErpRow> rows;
        for (const auto& row : curve.rows) {
            if (row.config == config) rows.push_back(row);
        }
        return rows;
    };

    std::ostringstream os;
    bool ok = true;

    // (a) stationary-pivotal critical values: |rate - level| > 2pp at every T,
    // with no significant decrease across the T range.
    const auto pivotal = rows_for("fixedb-stationary-cv");
    os << "pivotal erp/pp:";
    for (const auto& row : pivotal) {
        os << " " << 100.0 * row.erp;
        if (row.erp <= 0.02) ok = false;
    }
    {
        const auto& first = pivotal.front();
        const auto& last = pivotal.back();
        if (last.erp < first.erp - 2.0 * std::hypot(first.se, last.se)) ok = false;
    }

    // (b) plug-in critical values: ERP decreasing in T (monotone within 2 se).
    const auto plug = rows_for("fixedb-plugin-cv");
    os << "; plug-in erp/pp:";
    for (std::size_t i = 0; i < plug.size(); ++i) {
        os << " " << 100.0 * plug[i].erp;
        if (i > 0) {
            const double slack = 2.0 * std::hypot(plug[i].se, plug[i - 1].se);
            if (plug[i].erp >= plug[i - 1].erp + slack) ok = false;
        }
    }
    if (plug.back().erp >= plug.front().erp) ok = false;

    // (c) HAC-based test: ERP also decreasing.
    const auto hac = rows_for("hac-normal-cv");
    os << "; hac erp/pp:";
    for (std::size_t i = 0; i < hac.size(); ++i) {
        os << " " << 100.0 * hac[i].erp;
        if (i > 0) {
            const double slack = 2.0 * std::hypot(hac[i].se, hac[i - 1].se);
            if (hac[i].erp >= hac[i - 1].erp + slack) ok = false;
        }
    }
    if (hac.back().erp >= hac.front().erp) ok = false;

    detail = os.str();
    return ok;
}

bool criterion_7(std::string& detail) {
    struct Combo {
        LagKernelId kernel;
        double b;
        VariancePath omega;
    };
    const Combo combos[] = {
        {LagKernelId::Bartlett, 1.0, unit_path()},
        {LagKernelId::Bartlett, 0.3, break_path(1.0, 4.0)},
        {LagKernelId::Parzen, 0.25, break_path(1.0, 4.0)},
        {LagKernelId::Parzen, 0.6, unit_path()},
        {LagKernelId::QuadraticSpectral, 0.15, unit_path()},
        {LagKernelId::Bartlett, 0.5, MatrixPath::scalar(ScalarPath({{0.0, 1.0, 1.0, 2.0}}))},
    };
    for (const auto& combo : combos) {
        const BandwidthedKernel kb = make_bandwidthed(combo.kernel, combo.b);
        const double omega = combo.omega.scalar_integrated();
        const double c_omega = combo.omega.scalar_sup();
        const double c1_bar = 4.0 * abs_integral(kb.base);
        for (int m : {2, 3}) {
            const double kappa = limit_cumulant(kb, combo.omega, m);
            double factorial = 1.0;
            for (int i = 2; i < m; ++i) factorial *= i;
            const double bound = std::pow(2.0, m) * factorial * std::pow(omega, -m) *
                                 std::pow(c_omega, m) * std::pow(c1_bar * combo.b, m - 1);
            if (std::abs(kappa) > bound) {
                detail = std::string("cumulant bound violated for ") +
                         make_lag_kernel(combo.kernel).name();
                return false;
            }
            if (m == 2 && kappa < 0.0) {
                detail = "negative second cumulant";
                return false;
            }
        }
    }

    // kappa_2 against the Monte Carlo variance of normalized draws.
    const BandwidthedKernel kb = make_bandwidthed(LagKernelId::Parzen, 0.25);
    const VariancePath omega_path = break_path(1.0, 4.0);
    const double omega = omega_path.scalar_integrated();
    std::vector<double> normalized;
    for (int d = 0; d < 20000; ++d) {
        normalized.push_back(draw_lrv_limit_increment_form(kb, omega_path, unit_path(),
                                                           GridSpec{200},
                                                           derive_seed(71, d))(0, 0) /
                             omega);
    }
    const double target = limit_cumulant(kb, omega_path, 2);
    const double var = sample_variance(normalized);
    double m2 = 0.0, m4 = 0.0;
    const double mn = mean(normalized);
    for (double x : normalized) {
        const double d2 = (x - mn) * (x - mn);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= normalized.size();
    m4 /= normalized.size();
    const double var_se = std::sqrt((m4 - m2 * m2) / normalized.size());
    if (std::abs(var - target) > 3.0 * var_se) {
        detail = "kappa_2 " + std::to_string(target) + " vs mc variance " +
                 std::to_string(var);
        return false;
    }

    // finite-T mean at T = 500 for the iid spec.
    const double mu_T = finite_sample_mean(location_iid(), 500,
                                           make_bandwidthed(LagKernelId::Bartlett, 1.0));
    std::ostringstream os;
    os << "kappa_2 mc gap " << std::abs(var - target) << ", mu_{1,T} " << mu_T;
    detail = os.str();
    return std::abs(mu_T - 1.0 / 3.0) <= 0.02;
}

bool criterion_8(std::string& detail) {
    // The b = 0.1 evaluation sits above the enforced series bound 1/16, so the
    // truncation is evaluated with the bound check switched off; the enforced
    // default is exercised by the unit tests.
    const BandwidthedKernel kb = make_bandwidthed(LagKernelId::Bartlett, 0.1);
    const double approx = expansion_two_sided_prob(kb, unit_path(), 1.96, 3, false);
    const LimitDrawSet set =
        simulate_limit_t_draws(make_lag_kernel(LagKernelId::Bartlett), 0.1, unit_path(),
                               unit_path(), kR1, GridSpec{1000}, 20000, 81);
    int below = 0;
    for (double t : set.draws) {
        if (std::abs(t) <= 1.96) ++below;
    }
    const double mc = static_cast<double>(below) / set.draws.size();
    std::ostringstream os;
    os << "expansion " << approx << " vs mc " << mc;
    detail = os.str();
    return std::abs(approx - mc) <= 0.02;
}

bool criterion_9(std::string& detail) {
    const fs::path tmp = fs::path("acceptance_tmp");
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    const std::string spec = g_root + "/data/specs/experiment_size_stationary.json";
    const std::string golden_rej = g_root + "/data/golden/size_stationary_rejections.csv";
    const std::string golden_q = g_root + "/data/golden/limitdist_bartlett_b1_quantiles.csv";

    if (run_cli({"experiment", "--spec", spec, "--mode", "size", "--out",
                 (tmp / "run1").string()}) != 0) {
        detail = "experiment run failed";
        return false;
    }
    if (run_cli({"experiment", "--spec", spec, "--mode", "size", "--threads", "3", "--out",
                 (tmp / "run2").string()}) != 0) {
        detail = "threaded experiment run failed";
        return false;
    }
    const std::string r1 = slurp((tmp / "run1" / "rejections.csv").string());
    const std::string r2 = slurp((tmp / "run2" / "rejections.csv").string());
    const std::string gold = slurp(golden_rej);
    if (r1 != gold) {
        detail = "experiment output differs from the golden file";
        return false;
    }
    if (r1 != r2) {
        detail = "experiment output depends on the worker count";
        return false;
    }

    if (run_cli({"--grid-n", "500", "--seed", "424242", "limitdist", "--stationary",
                 "--kernel", "bartlett", "--b", "1", "--draws", "50000", "--out",
                 (tmp / "ld").string()}) != 0) {
        detail = "limitdist run failed";
        return false;
    }
    const std::string q = slurp((tmp / "ld_quantiles.csv").string());
    if (q != slurp(golden_q)) {
        detail = "limitdist quantile table differs from the golden file";
        return false;
    }

    fs::remove_all(tmp);
    detail = "experiment and limitdist outputs reproduce byte-for-byte";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: acceptance <cli-binary> <source-root> [criterion]\n");
        return 2;
    }
    g_cli = argv[1];
    g_root = argv[2];
    const int only = argc > 3 ? std::atoi(argv[3]) : 0;

    struct Criterion {
        int id;
        const char* name;
        std::function<bool(std::string&)> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "Bartlett partial-sum identity", criterion_1},
        {2, "limit mean anchor 1/3", criterion_2},
        {3, "stationary reduction and pivotality", criterion_3},
        {4, "non-pivotality under a variance break", criterion_4},
        {5, "HAC consistency and size", criterion_5},
        {6, "ERP orders across critical-value sources", criterion_6},
        {7, "cumulant machinery", criterion_7},
        {8, "chi-square expansion vs Monte Carlo", criterion_8},
        {9, "byte-for-byte determinism of CLI outputs", criterion_9},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (only != 0 && c.id != only) continue;
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %d: %s (%s; %.1f s)\n", ok ? "PASS" : "FAIL", c.id,
                    c.name, detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
