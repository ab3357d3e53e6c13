#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "har/harness.hpp"
#include "har/io.hpp"

namespace har {

namespace {

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::DataError, "cannot open file: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::DataError, std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return j;
}

SamplePath load_sample(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::DataError, "cannot open file: " + path);
    }
    return read_sample_csv(in);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::DataError, "cannot write file: " + path);
    }
    out << content;
}

std::vector<double> parse_levels(const std::string& csv) {
    std::vector<double> levels;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) levels.push_back(std::stod(cell));
    if (levels.empty()) {
        throw Error(ErrorCode::UsageError, "no quantile levels given");
    }
    return levels;
}

std::string git_describe() {
    std::FILE* pipe = popen("git describe --always --dirty 2>/dev/null", "r");
    if (!pipe) return "unknown";
    char buf[128] = {0};
    std::string out;
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) out += buf;
    pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

int run_simulate(const std::string& spec_path, int T, std::uint64_t seed,
                 const std::string& out) {
    const DgpSpec spec = dgp_from_json(load_json_file(spec_path));
    const SamplePath sample = simulate(spec, T, seed);
    std::ostringstream os;
    write_sample_csv(os, sample);
    if (out.empty()) {
        std::cout << os.str();
    } else {
        write_text_file(out, os.str());
    }
    return 0;
}

int run_estimate(const std::string& input, const std::string& mode,
                 const std::string& kernel_name, double bt, double b, double h1, double h2,
                 const std::string& time_kernel_name, int points, bool with_q,
                 const std::string& out) {
    const SamplePath sample = load_sample(input);
    const OlsFit fit = ols_fit(sample);
    const LagKernel kernel = lag_kernel_from_name(kernel_name);
    if (mode == "hac" || mode == "fixed-b") {
        if (mode == "hac" && !(bt > 0.0)) {
            throw Error(ErrorCode::UsageError, "hac mode needs --bt > 0");
        }
        const LrvEstimate est = mode == "hac"
                                    ? hac_lrv(fit, kernel, bt)
                                    : fixed_b_lrv(fit, kernel, b);
        const std::string body = lrv_to_json(est).dump(2) + "\n";
        if (out.empty()) {
            std::cout << body;
        } else {
            write_text_file(out, body);
        }
        return 0;
    }
    if (mode != "curve") {
        throw Error(ErrorCode::UsageError, "estimate mode must be hac, fixed-b or curve");
    }
    const int T = sample.T();
    if (h1 <= 0.0) h1 = default_h1(T);
    if (h2 <= 0.0) h2 = default_h2(T);
    Eigen::VectorXd grid(points);
    for (int i = 0; i < points; ++i) {
        grid[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(points);
    }
    const TimeKernel k2 = time_kernel_from_name(time_kernel_name);
    const LocalLrvCurve curve = local_lrv_curve(fit, grid, h1, h2, kernel, k2);
    std::vector<double> q_curve;
    if (with_q) {
        for (int i = 0; i < points; ++i) {
            q_curve.push_back(local_regressor_moment(sample, grid[i], h2, k2)(0, 0));
        }
    }
    std::ostringstream os;
    write_curve_csv(os, curve, q_curve);
    if (out.empty()) {
        std::cout << os.str();
    } else {
        write_text_file(out, os.str());
    }
    return 0;
}

int run_limitdist(bool stationary, const std::string& dgp_path,
                  const std::string& curve_path, const std::string& kernel_name, double b,
                  int draws, int grid_n, std::uint64_t seed, const std::string& levels_csv,
                  const std::string& out) {
    const LagKernel kernel = lag_kernel_from_name(kernel_name);
    const std::vector<double> levels = parse_levels(levels_csv);
    LimitDrawSet set;
    if (stationary) {
        set = simulate_stationary_pivotal_draws(kernel, b, "t", 1, GridSpec{grid_n}, draws,
                                                seed);
    } else if (!dgp_path.empty()) {
        const DgpSpec spec = dgp_from_json(load_json_file(dgp_path));
        if (spec.p() != 1) {
            throw Error(ErrorCode::UsageError,
                        "limitdist --dgp draws the scalar t limit; use a location-model spec");
        }
        const VariancePath omega = variance_path(spec);
        const RegressorMomentPath q = moment_path(spec);
        set = simulate_limit_t_draws(kernel, b, omega, q, Eigen::MatrixXd::Identity(1, 1),
                                     GridSpec{grid_n}, draws, seed);
    } else if (!curve_path.empty()) {
        std::ifstream in(curve_path);
        if (!in) {
            throw Error(ErrorCode::DataError, "cannot open file: " + curve_path);
        }
        const CurveCsv cc = read_curve_csv(in);
        set = plug_in_limit_distribution(cc.curve, cc.q_curve, kernel, b, GridSpec{grid_n},
                                         draws, seed);
    } else {
        throw Error(ErrorCode::UsageError,
                    "limitdist needs --stationary, --dgp or --curve");
    }
    std::vector<double> abs_draws = set.sorted_abs();
    const CriticalValueTable table = critical_values(abs_draws, levels);
    std::ostringstream qs;
    write_quantile_csv(qs, table);
    if (out.empty()) {
        std::cout << qs.str();
        return 0;
    }
    write_text_file(out + "_quantiles.csv", qs.str());
    std::ostringstream ds;
    write_drawset_csv(ds, set);
    write_text_file(out + "_draws.csv", ds.str());
    write_text_file(out + "_meta.json", drawset_metadata_json(set).dump(2) + "\n");
    return 0;
}

int run_test(const std::string& input, const std::string& statistic,
             const std::string& kernel_name, double b, double bt,
             const std::string& cv_source, double level, const std::string& r_rows,
             const std::string& r_rhs, const std::string& curve_path,
             const std::string& draws_csv, int grid_n, int draws, std::uint64_t seed,
             const std::string& out) {
    const SamplePath sample = load_sample(input);
    const OlsFit fit = ols_fit(sample);
    const LagKernel kernel = lag_kernel_from_name(kernel_name);
    const StatKind kind = stat_kind_from_name(statistic);
    const CvSource source = cv_source_from_name(cv_source);

    HypothesisSpec hyp;
    if (r_rows.empty()) {
        hyp.R = Eigen::MatrixXd::Zero(1, fit.p());
        hyp.R(0, 0) = 1.0;
        hyp.r = Eigen::VectorXd::Zero(1);
    } else {
        std::vector<double> rvals;
        std::stringstream ss(r_rows);
        std::string cell;
        while (std::getline(ss, cell, ',')) rvals.push_back(std::stod(cell));
        if (rvals.size() % fit.p() != 0) {
            throw Error(ErrorCode::UsageError, "--R length must be a multiple of p");
        }
        const int q = static_cast<int>(rvals.size()) / fit.p();
        hyp.R.resize(q, fit.p());
        for (int i = 0; i < q; ++i) {
            for (int c = 0; c < fit.p(); ++c) hyp.R(i, c) = rvals[i * fit.p() + c];
        }
        hyp.r = Eigen::VectorXd::Zero(q);
        if (!r_rhs.empty()) {
            std::vector<double> rr;
            std::stringstream rs(r_rhs);
            while (std::getline(rs, cell, ',')) rr.push_back(std::stod(cell));
            if (static_cast<int>(rr.size()) != q) {
                throw Error(ErrorCode::UsageError, "--r length must equal the row count of R");
            }
            for (int i = 0; i < q; ++i) hyp.r(i) = rr[i];
        }
    }

    double stat = 0.0;
    switch (kind) {
        case StatKind::TFixedB:
            stat = t_stat_fixed_b(fit, hyp, kernel, b);
            break;
        case StatKind::FFixedB:
            stat = f_stat_fixed_b(fit, hyp, kernel, b);
            break;
        case StatKind::THac:
            stat = t_stat_hac(fit, hyp, kernel,
                              bt > 0.0 ? bt : 1.0 / std::sqrt(static_cast<double>(fit.T())));
            break;
    }

    DecisionContext ctx;
    ctx.kernel = kernel;
    ctx.b = b;
    ctx.grid_n = grid_n;
    ctx.draw_count = draws;
    ctx.seed = seed;
    ctx.q = hyp.q();
    LimitDrawSet saved;
    if (!draws_csv.empty()) {
        std::ifstream in(draws_csv);
        if (!in) {
            throw Error(ErrorCode::DataError, "cannot open file: " + draws_csv);
        }
        saved.draws = read_drawset_csv(in);
        if (saved.draws.size() < 1000) {
            throw Error(ErrorCode::DataError, "saved draw set is too small");
        }
        saved.statistic = "t";
        saved.kernel = kernel.id;
        saved.b = b;
        ctx.draws = &saved;
    }
    LocalLrvCurve curve;
    std::vector<double> q_curve;
    if (source == CvSource::NonstationaryPlugIn && ctx.draws == nullptr) {
        if (!curve_path.empty()) {
            std::ifstream in(curve_path);
            if (!in) {
                throw Error(ErrorCode::DataError, "cannot open file: " + curve_path);
            }
            CurveCsv cc = read_curve_csv(in);
            curve = std::move(cc.curve);
            q_curve = std::move(cc.q_curve);
        } else {
            const int T = sample.T();
            const int points = std::max(4, std::min(50, T / 16));
            Eigen::VectorXd grid(points);
            for (int i = 0; i < points; ++i) {
                grid[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(points);
            }
            curve = local_lrv_curve(fit, grid, default_h1(T), default_h2(T),
                                    make_lag_kernel(LagKernelId::Parzen),
                                    make_time_kernel(TimeKernelId::Quartic));
        }
        ctx.sigma_curve = &curve;
        if (!q_curve.empty()) ctx.q_curve = &q_curve;
    }
    const TestResult result = decide(stat, kind, source, level, ctx);
    const std::string body = test_result_to_json(result).dump(2) + "\n";
    if (out.empty()) {
        std::cout << body;
    } else {
        write_text_file(out, body);
    }
    return 0;
}

int run_experiment(const std::string& spec_path, const std::string& mode,
                   const std::string& out_dir, int threads_override,
                   std::uint64_t seed_override, bool seed_given) {
    nlohmann::json j = load_json_file(spec_path);
    ExperimentSpec spec = experiment_from_json(j);
    if (threads_override > 0) spec.threads = threads_override;
    if (seed_given) spec.seed = seed_override;

    const auto start = std::chrono::steady_clock::now();
    std::ostringstream result_csv;
    std::string result_name;
    if (mode == "size") {
        write_rejection_csv(result_csv, run_size_experiment(spec));
        result_name = "rejections.csv";
    } else if (mode == "power") {
        write_rejection_csv(result_csv, run_power_experiment(spec));
        result_name = "rejections.csv";
    } else if (mode == "erp") {
        write_erp_csv(result_csv, run_erp_study(spec));
        result_name = "erp.csv";
    } else {
        throw Error(ErrorCode::UsageError, "experiment mode must be size, power or erp");
    }
    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();

    if (out_dir.empty()) {
        std::cout << result_csv.str();
        return 0;
    }
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir + "/" + result_name, result_csv.str());
    nlohmann::json meta;
    meta["schema"] = 1;
    meta["name"] = spec.name;
    meta["mode"] = mode;
    meta["seed"] = spec.seed;
    meta["threads"] = spec.threads;
    meta["git_describe"] = git_describe();
    meta["wall_time_sec"] = elapsed;
    write_text_file(out_dir + "/meta.json", meta.dump(2) + "\n");
    return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"HAR inference toolkit: long-run variance estimation, fixed-b limit "
                 "simulation and Monte Carlo studies under nonstationarity"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 12345;
    bool seed_given = false;
    app.add_option("--seed", seed, "base random seed")->each([&](const std::string&) {
        seed_given = true;
    });
    int threads = 0;
    app.add_option("--threads", threads, "worker threads for experiments");
    int grid_n = 1000;
    app.add_option("--grid-n", grid_n, "grid size for limit simulation");
    std::string out;
    app.add_option("--out", out, "output file, prefix or directory");

    auto* sim = app.add_subcommand("simulate", "simulate a DGP to CSV");
    std::string sim_spec;
    int sim_T = 200;
    sim->add_option("--spec", sim_spec, "DGP spec JSON")->required();
    sim->add_option("--T", sim_T, "sample length")->required();

    auto* est = app.add_subcommand("estimate", "LRV estimates from a sample CSV");
    std::string est_input, est_mode = "hac", est_kernel = "bartlett";
    std::string est_time_kernel = "quartic";
    double est_bt = 0.0, est_b = 1.0, est_h1 = 0.0, est_h2 = 0.0;
    int est_points = 25;
    bool est_with_q = false;
    est->add_option("--input", est_input, "sample CSV")->required();
    est->add_option("--mode", est_mode, "hac | fixed-b | curve");
    est->add_option("--kernel", est_kernel, "lag kernel name");
    est->add_option("--bt", est_bt, "HAC bandwidth b_T");
    est->add_option("--b", est_b, "fixed-b bandwidth");
    est->add_option("--h1", est_h1, "curve lag bandwidth (default rule)");
    est->add_option("--h2", est_h2, "curve time bandwidth (default rule)");
    est->add_option("--time-kernel", est_time_kernel, "time kernel name");
    est->add_option("--points", est_points, "curve grid points");
    est->add_flag("--with-q", est_with_q, "append local regressor moments");

    auto* lim = app.add_subcommand("limitdist", "simulate limiting t draws and quantiles");
    bool lim_stationary = false;
    std::string lim_dgp, lim_curve, lim_kernel = "bartlett";
    std::string lim_levels = "0.9,0.95,0.975,0.99";
    double lim_b = 1.0;
    int lim_draws = 100000;
    lim->add_flag("--stationary", lim_stationary, "unit nuisance curves");
    lim->add_option("--dgp", lim_dgp, "DGP spec JSON for oracle curves");
    lim->add_option("--curve", lim_curve, "estimated curve CSV (plug-in)");
    lim->add_option("--kernel", lim_kernel, "lag kernel name");
    lim->add_option("--b", lim_b, "fixed-b bandwidth");
    lim->add_option("--draws", lim_draws, "number of draws");
    lim->add_option("--levels", lim_levels, "comma-separated quantile levels");

    auto* tst = app.add_subcommand("test", "run a HAR test on a sample CSV");
    std::string tst_input, tst_stat = "t-fixed-b", tst_kernel = "bartlett";
    std::string tst_source = "standard", tst_R, tst_r, tst_curve, tst_draws_csv;
    double tst_b = 1.0, tst_bt = 0.0, tst_level = 0.05;
    int tst_draws = 100000;
    tst->add_option("--input", tst_input, "sample CSV")->required();
    tst->add_option("--statistic", tst_stat, "t-fixed-b | f-fixed-b | t-hac");
    tst->add_option("--kernel", tst_kernel, "lag kernel name");
    tst->add_option("--b", tst_b, "fixed-b bandwidth");
    tst->add_option("--bt", tst_bt, "HAC bandwidth (default T^{-1/2})");
    tst->add_option("--cv-source", tst_source, "standard | stationary-pivotal | plug-in");
    tst->add_option("--level", tst_level, "test level");
    tst->add_option("--R", tst_R, "restriction matrix, row-major comma list");
    tst->add_option("--r", tst_r, "restriction right-hand side");
    tst->add_option("--curve", tst_curve, "plug-in curve CSV (else estimated)");
    tst->add_option("--draws", tst_draws, "draws for simulated critical values");
    tst->add_option("--draws-csv", tst_draws_csv,
                    "reuse a saved draw set instead of simulating one");

    auto* exp = app.add_subcommand("experiment", "run a Monte Carlo study");
    std::string exp_spec, exp_mode = "size";
    exp->add_option("--spec", exp_spec, "experiment spec JSON")->required();
    exp->add_option("--mode", exp_mode, "size | power | erp");

    std::vector<const char*> argv;
    argv.push_back("har");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);  // --help
        }
        std::cerr << nlohmann::json{{"error", "UsageError"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 1;
    }

    try {
        if (sim->parsed()) return run_simulate(sim_spec, sim_T, seed, out);
        if (est->parsed()) {
            return run_estimate(est_input, est_mode, est_kernel, est_bt, est_b, est_h1,
                                est_h2, est_time_kernel, est_points, est_with_q, out);
        }
        if (lim->parsed()) {
            return run_limitdist(lim_stationary, lim_dgp, lim_curve, lim_kernel, lim_b,
                                 lim_draws, grid_n, seed, lim_levels, out);
        }
        if (tst->parsed()) {
            return run_test(tst_input, tst_stat, tst_kernel, tst_b, tst_bt, tst_source,
                            tst_level, tst_R, tst_r, tst_curve, tst_draws_csv, grid_n,
                            tst_draws, seed, out);
        }
        if (exp->parsed()) {
            return run_experiment(exp_spec, exp_mode, out, threads, seed, seed_given);
        }
        std::cerr << nlohmann::json{{"error", "UsageError"},
                                    {"message", "no subcommand"}}
                         .dump()
                  << std::endl;
        return 1;
    } catch (const Error& e) {
        std::cerr << nlohmann::json{{"error", error_code_name(e.code())},
                                    {"message", e.what()}}
                         .dump()
                  << std::endl;
        switch (e.code()) {
            case ErrorCode::UsageError:
                return 1;
            case ErrorCode::DataError:
                return 2;
            default:
                return 3;
        }
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "Internal"}, {"message", e.what()}}.dump()
                  << std::endl;
        return 3;
    }
}

}  // namespace har
