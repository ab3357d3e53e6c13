#include "har/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "har/io.hpp"
#include "har/numeric.hpp"
#include "har/rng.hpp"

namespace har {

double TestConfig::hac_bandwidth(int T) const {
    if (bt > 0.0) return bt;
    if (bt_rule == "inverse-sqrt") return 1.0 / std::sqrt(static_cast<double>(T));
    throw Error(ErrorCode::UsageError, "unknown HAC bandwidth rule: " + bt_rule);
}

void ExperimentSpec::validate() const {
    dgp.validate();
    if (T_list.empty()) {
        throw Error(ErrorCode::InvalidSpec, "experiment needs at least one T");
    }
    for (std::size_t i = 1; i < T_list.size(); ++i) {
        if (T_list[i] <= T_list[i - 1]) {
            throw Error(ErrorCode::InvalidSpec, "T_list must be ascending");
        }
    }
    if (reps.empty()) {
        throw Error(ErrorCode::InvalidSpec, "experiment needs a replication count");
    }
    if (reps.size() != 1 && reps.size() != T_list.size()) {
        throw Error(ErrorCode::InvalidSpec, "reps must be scalar or match T_list");
    }
    for (int r : reps) {
        if (r < 100) {
            throw Error(ErrorCode::InvalidSpec, "reps must be at least 100");
        }
    }
    if (tests.empty()) {
        throw Error(ErrorCode::InvalidSpec, "experiment needs at least one test config");
    }
    if (!(level > 0.0 && level <= 1.0)) {
        throw Error(ErrorCode::InvalidSpec, "level must lie in (0,1]");
    }
}

int ExperimentSpec::reps_for(std::size_t t_index) const {
    return reps.size() == 1 ? reps[0] : reps[t_index];
}

HypothesisSpec ExperimentSpec::effective_hypothesis() const {
    if (hypothesis) return *hypothesis;
    HypothesisSpec hyp;
    const int p = dgp.p();
    hyp.R = Eigen::MatrixXd::Zero(1, p);
    hyp.R(0, 0) = 1.0;
    hyp.r = Eigen::VectorXd::Zero(1);
    hyp.r(0) = dgp.beta0(0);
    return hyp;
}

namespace {

struct ConfigAccum {
    int successes = 0;
    int failures = 0;
    int rejects = 0;
    double sum_stat = 0.0;
    double sum_cv = 0.0;
};

struct RepResult {
    std::vector<unsigned char> ok;
    std::vector<unsigned char> reject;
    std::vector<double> stat;
    std::vector<double> cv;
};

// Curve grid for per-replication plug-in estimation: midpoints, capped so the
// first window keeps at least ~16 observations.
Eigen::VectorXd plugin_curve_grid(const ExperimentSpec& spec, int T) {
    const int points = std::max(4, std::min(spec.curve_points, T / 16));
    Eigen::VectorXd grid(points);
    for (int i = 0; i < points; ++i) {
        grid[i] = (static_cast<double>(i) + 0.5) / static_cast<double>(points);
    }
    return grid;
}

struct TLevelSetup {
    int T = 0;
    int reps = 0;
    std::uint64_t seed = 0;                 // per-T seed
    std::vector<double> fixed_cv;           // per config; NaN when per-rep
    std::vector<double> fixed_cv_se;
    Eigen::VectorXd curve_grid;
    double h1 = 0.0, h2 = 0.0;
    bool any_plugin = false;
};

RejectionTable run_rejection_core(const ExperimentSpec& spec,
                                  const std::vector<double>& d_values) {
    spec.validate();
    HypothesisSpec hyp = spec.effective_hypothesis();
    hyp.validate(spec.dgp.p());
    const int q = hyp.q();
    for (const auto& cfg : spec.tests) {
        if (cfg.statistic != StatKind::FFixedB && q != 1) {
            throw Error(ErrorCode::InvalidSpec, "t statistics need a single restriction");
        }
        if (cfg.cv_source == CvSource::NonstationaryPlugIn && spec.dgp.p() != 1) {
            throw Error(ErrorCode::InvalidSpec,
                        "plug-in critical values are implemented for the location model");
        }
    }
    // Drift direction: R beta moves by exactly d/sqrt(T).
    const Eigen::VectorXd drift_dir =
        hyp.R.transpose() * (hyp.R * hyp.R.transpose()).inverse() *
        Eigen::VectorXd::Ones(q);

    const int n_cfg = static_cast<int>(spec.tests.size());
    const LagKernel curve_k1 = make_lag_kernel(spec.curve_lag_kernel);
    const TimeKernel curve_k2 = make_time_kernel(spec.curve_time_kernel);

    RejectionTable table;
    for (std::size_t ti = 0; ti < spec.T_list.size(); ++ti) {
        TLevelSetup setup;
        setup.T = spec.T_list[ti];
        setup.reps = spec.reps_for(ti);
        setup.seed = derive_seed(spec.seed, 1000 + ti);
        setup.curve_grid = plugin_curve_grid(spec, setup.T);
        setup.h1 = default_h1(setup.T);
        setup.h2 = default_h2(setup.T);
        setup.fixed_cv.assign(n_cfg, std::numeric_limits<double>::quiet_NaN());
        setup.fixed_cv_se.assign(n_cfg, 0.0);

        // Critical values that do not depend on the replication: computed up
        // front, sequentially, so worker count cannot matter.
        for (int ci = 0; ci < n_cfg; ++ci) {
            const TestConfig& cfg = spec.tests[ci];
            const bool is_t = cfg.statistic != StatKind::FFixedB;
            if (cfg.cv_source == CvSource::Standard) {
                if (spec.level >= 1.0) {
                    setup.fixed_cv[ci] = 0.0;
                } else if (is_t) {
                    setup.fixed_cv[ci] = normal_quantile(1.0 - spec.level / 2.0);
                } else {
                    setup.fixed_cv[ci] =
                        chi_square_quantile(1.0 - spec.level, q) / static_cast<double>(q);
                }
            } else if (cfg.cv_source == CvSource::StationaryPivotal) {
                const LagKernel kernel = make_lag_kernel(cfg.kernel);
                const LimitDrawSet& set = stationary_pivotal_cached(
                    kernel, cfg.b, is_t ? "t" : "F", q, spec.grid_n, spec.pivotal_draws,
                    derive_seed(spec.seed, 500 + ci));
                const CvEstimate cv = is_t ? two_sided_critical_value(set, spec.level)
                                           : upper_critical_value(set, spec.level);
                setup.fixed_cv[ci] = cv.value;
                setup.fixed_cv_se[ci] = cv.se;
            } else {
                setup.any_plugin = true;
            }
        }

        for (double d : d_values) {
            DgpSpec dgp = spec.dgp;
            dgp.alternative_offset = d;
            dgp.alternative_direction = drift_dir;

            std::vector<RepResult> results(setup.reps);
            std::atomic<int> next{0};
            auto worker = [&]() {
                for (;;) {
                    const int r = next.fetch_add(1);
                    if (r >= setup.reps) break;
                    RepResult& out = results[r];
                    out.ok.assign(n_cfg, 0);
                    out.reject.assign(n_cfg, 0);
                    out.stat.assign(n_cfg, 0.0);
                    out.cv.assign(n_cfg, 0.0);
                    const std::uint64_t rep_seed = derive_seed(setup.seed, r);
                    SamplePath sample;
                    OlsFit fit;
                    try {
                        sample = simulate(dgp, setup.T, rep_seed);
                        fit = ols_fit(sample);
                    } catch (const Error&) {
                        continue;  // whole replication failed; all configs count it
                    }
                    bool have_curve = false;
                    LocalLrvCurve curve;
                    for (int ci = 0; ci < n_cfg; ++ci) {
                        const TestConfig& cfg = spec.tests[ci];
                        const LagKernel kernel = make_lag_kernel(cfg.kernel);
                        const bool is_t = cfg.statistic != StatKind::FFixedB;
                        try {
                            double stat = 0.0;
                            switch (cfg.statistic) {
                                case StatKind::TFixedB:
                                    stat = t_stat_fixed_b(fit, hyp, kernel, cfg.b);
                                    break;
                                case StatKind::FFixedB:
                                    stat = f_stat_fixed_b(fit, hyp, kernel, cfg.b);
                                    break;
                                case StatKind::THac:
                                    stat = t_stat_hac(fit, hyp, kernel,
                                                      cfg.hac_bandwidth(setup.T));
                                    break;
                            }
                            double cv = setup.fixed_cv[ci];
                            if (cfg.cv_source == CvSource::NonstationaryPlugIn) {
                                if (!have_curve) {
                                    curve = local_lrv_curve(fit, setup.curve_grid,
                                                            setup.h1, setup.h2, curve_k1,
                                                            curve_k2);
                                    have_curve = true;
                                }
                                const LimitDrawSet draws = plug_in_limit_distribution(
                                    curve, {}, kernel, cfg.b, GridSpec{spec.grid_n},
                                    spec.plugin_draws, derive_seed(rep_seed, 5000 + ci));
                                const CvEstimate est =
                                    two_sided_critical_value(draws, spec.level);
                                cv = is_t ? est.value : est.value * est.value;
                            }
                            out.stat[ci] = stat;
                            out.cv[ci] = cv;
                            out.reject[ci] =
                                is_t ? (std::abs(stat) > cv) : (stat > cv);
                            out.ok[ci] = 1;
                        } catch (const Error&) {
                            // counted as a failed replication for this config
                        }
                    }
                }
            };
            const int n_threads = std::max(1, spec.threads);
            if (n_threads == 1) {
                worker();
            } else {
                std::vector<std::thread> pool;
                pool.reserve(n_threads);
                for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
                for (auto& th : pool) th.join();
            }

            // Order-independent aggregation by replication index.
            std::vector<ConfigAccum> accum(n_cfg);
            for (int r = 0; r < setup.reps; ++r) {
                const RepResult& res = results[r];
                for (int ci = 0; ci < n_cfg; ++ci) {
                    if (res.ok.empty() || !res.ok[ci]) {
                        ++accum[ci].failures;
                        continue;
                    }
                    ++accum[ci].successes;
                    accum[ci].rejects += res.reject[ci];
                    accum[ci].sum_stat += res.stat[ci];
                    accum[ci].sum_cv += res.cv[ci];
                }
            }
            for (int ci = 0; ci < n_cfg; ++ci) {
                const ConfigAccum& a = accum[ci];
                if (a.failures * 100 > setup.reps) {
                    throw Error(ErrorCode::DataError,
                                "more than 1% of replications failed for config '" +
                                    spec.tests[ci].name + "'");
                }
                RejectionRow row;
                row.T = setup.T;
                row.config = spec.tests[ci].name;
                row.d = d;
                row.reps = setup.reps;
                row.successes = a.successes;
                row.failures = a.failures;
                const double n_ok = std::max(1, a.successes);
                row.rate = static_cast<double>(a.rejects) / n_ok;
                row.se = std::sqrt(row.rate * (1.0 - row.rate) / n_ok);
                row.mean_stat = a.sum_stat / n_ok;
                row.mean_cv = a.sum_cv / n_ok;
                table.rows.push_back(row);
            }
        }
    }
    return table;
}

}  // namespace

RejectionTable run_size_experiment(const ExperimentSpec& spec) {
    for (double d : spec.d_list) {
        if (d != 0.0) {
            throw Error(ErrorCode::InvalidSpec, "size experiment runs at d = 0 only");
        }
    }
    return run_rejection_core(spec, {0.0});
}

RejectionTable run_power_experiment(const ExperimentSpec& spec) {
    if (spec.d_list.empty()) {
        throw Error(ErrorCode::InvalidSpec, "power experiment needs a nonempty d_list");
    }
    return run_rejection_core(spec, spec.d_list);
}

ErpCurve run_erp_study(const ExperimentSpec& spec) {
    if (spec.T_list.size() < 3) {
        throw Error(ErrorCode::InvalidSpec, "ERP study needs at least 3 sample sizes");
    }
    const RejectionTable table = run_rejection_core(spec, {0.0});
    ErpCurve curve;
    std::map<std::string, std::vector<std::pair<double, double>>> fit_points;
    for (const auto& row : table.rows) {
        ErpRow e;
        e.config = row.config;
        e.T = row.T;
        e.rate = row.rate;
        e.se = row.se;
        e.erp = std::abs(row.rate - spec.level);
        curve.rows.push_back(e);
        // Floor at half a replication of resolution so the log fit is defined.
        const double floored = std::max(e.erp, 0.5 / std::max(1, row.successes));
        fit_points[e.config].push_back({std::log(static_cast<double>(e.T)),
                                        std::log(floored)});
    }
    for (const auto& [config, pts] : fit_points) {
        if (pts.size() < 3) continue;
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (const auto& [x, y] : pts) {
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(pts.size());
        curve.slope[config] = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
    if (!j.contains("schema") || j["schema"].get<int>() != 1) {
        throw Error(ErrorCode::DataError, "experiment spec must declare \"schema\": 1");
    }
    ExperimentSpec spec;
    spec.name = j.value("name", "experiment");
    spec.dgp = dgp_from_json(j.at("dgp"));
    for (const auto& t : j.at("T_list")) spec.T_list.push_back(t.get<int>());
    const auto& reps = j.at("reps");
    if (reps.is_array()) {
        for (const auto& r : reps) spec.reps.push_back(r.get<int>());
    } else {
        spec.reps.push_back(reps.get<int>());
    }
    spec.level = j.value("level", 0.05);
    spec.seed = j.value("seed", 1ULL);
    spec.threads = j.value("threads", 1);
    spec.grid_n = j.value("grid_n", 200);
    spec.pivotal_draws = j.value("pivotal_draws", 100000);
    spec.plugin_draws = j.value("plugin_draws", 2000);
    spec.curve_points = j.value("curve_points", 50);
    if (j.contains("curve_lag_kernel")) {
        spec.curve_lag_kernel = lag_kernel_from_name(j["curve_lag_kernel"].get<std::string>()).id;
    }
    if (j.contains("curve_time_kernel")) {
        spec.curve_time_kernel =
            time_kernel_from_name(j["curve_time_kernel"].get<std::string>()).id;
    }
    if (j.contains("d_list")) {
        for (const auto& d : j["d_list"]) spec.d_list.push_back(d.get<double>());
    }
    for (const auto& tj : j.at("tests")) {
        TestConfig cfg;
        cfg.name = tj.at("name").get<std::string>();
        cfg.statistic = stat_kind_from_name(tj.at("statistic").get<std::string>());
        cfg.kernel = lag_kernel_from_name(tj.value("kernel", "bartlett")).id;
        cfg.b = tj.value("b", 1.0);
        cfg.bt = tj.value("bt", 0.0);
        cfg.bt_rule = tj.value("bt_rule", "inverse-sqrt");
        cfg.cv_source = cv_source_from_name(tj.value("cv_source", "standard"));
        spec.tests.push_back(cfg);
    }
    if (j.contains("hypothesis")) {
        const auto& h = j["hypothesis"];
        HypothesisSpec hyp;
        const auto& rows = h.at("R");
        const int q = static_cast<int>(rows.size());
        const int p = static_cast<int>(rows[0].size());
        hyp.R.resize(q, p);
        for (int i = 0; i < q; ++i) {
            for (int c = 0; c < p; ++c) hyp.R(i, c) = rows[i][c].get<double>();
        }
        hyp.r.resize(q);
        for (int i = 0; i < q; ++i) hyp.r(i) = h.at("r")[i].get<double>();
        spec.hypothesis = hyp;
    }
    spec.validate();
    return spec;
}

nlohmann::json experiment_to_json(const ExperimentSpec& spec) {
    nlohmann::json j;
    j["schema"] = 1;
    j["name"] = spec.name;
    j["dgp"] = dgp_to_json(spec.dgp);
    j["T_list"] = spec.T_list;
    j["reps"] = spec.reps;
    j["level"] = spec.level;
    j["seed"] = spec.seed;
    j["threads"] = spec.threads;
    j["grid_n"] = spec.grid_n;
    j["pivotal_draws"] = spec.pivotal_draws;
    j["plugin_draws"] = spec.plugin_draws;
    j["curve_points"] = spec.curve_points;
    j["curve_lag_kernel"] = make_lag_kernel(spec.curve_lag_kernel).name();
    j["curve_time_kernel"] = make_time_kernel(spec.curve_time_kernel).name();
    if (!spec.d_list.empty()) j["d_list"] = spec.d_list;
    nlohmann::json tests = nlohmann::json::array();
    for (const auto& cfg : spec.tests) {
        nlohmann::json tj;
        tj["name"] = cfg.name;
        tj["statistic"] = stat_kind_name(cfg.statistic);
        tj["kernel"] = make_lag_kernel(cfg.kernel).name();
        tj["b"] = cfg.b;
        if (cfg.bt > 0.0) {
            tj["bt"] = cfg.bt;
        } else {
            tj["bt_rule"] = cfg.bt_rule;
        }
        tj["cv_source"] = cv_source_name(cfg.cv_source);
        tests.push_back(tj);
    }
    j["tests"] = tests;
    return j;
}

void write_rejection_csv(std::ostream& os, const RejectionTable& table) {
    os << "T,config,d,rate,se,mean_stat,mean_cv,reps,successes,failures\n";
    for (const auto& row : table.rows) {
        os << row.T << ',' << row.config << ',' << format_double(row.d) << ','
           << format_double(row.rate) << ',' << format_double(row.se) << ','
           << format_double(row.mean_stat) << ',' << format_double(row.mean_cv) << ','
           << row.reps << ',' << row.successes << ',' << row.failures << '\n';
    }
}

RejectionTable read_rejection_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) ||
        line != "T,config,d,rate,se,mean_stat,mean_cv,reps,successes,failures") {
        throw Error(ErrorCode::DataError, "rejection CSV has an unexpected header");
    }
    RejectionTable table;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 10) {
            throw Error(ErrorCode::DataError, "rejection CSV row has wrong arity");
        }
        RejectionRow row;
        row.T = std::stoi(cells[0]);
        row.config = cells[1];
        row.d = std::stod(cells[2]);
        row.rate = std::stod(cells[3]);
        row.se = std::stod(cells[4]);
        row.mean_stat = std::stod(cells[5]);
        row.mean_cv = std::stod(cells[6]);
        row.reps = std::stoi(cells[7]);
        row.successes = std::stoi(cells[8]);
        row.failures = std::stoi(cells[9]);
        table.rows.push_back(row);
    }
    return table;
}

void write_erp_csv(std::ostream& os, const ErpCurve& curve) {
    os << "config,T,rate,se,erp,slope\n";
    for (const auto& row : curve.rows) {
        os << row.config << ',' << row.T << ',' << format_double(row.rate) << ','
           << format_double(row.se) << ',' << format_double(row.erp) << ',';
        const auto it = curve.slope.find(row.config);
        if (it != curve.slope.end()) os << format_double(it->second);
        os << '\n';
    }
}

ErpCurve read_erp_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "config,T,rate,se,erp,slope") {
        throw Error(ErrorCode::DataError, "erp CSV has an unexpected header");
    }
    ErpCurve curve;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        while (cells.size() < 6) cells.push_back("");
        ErpRow row;
        row.config = cells[0];
        row.T = std::stoi(cells[1]);
        row.rate = std::stod(cells[2]);
        row.se = std::stod(cells[3]);
        row.erp = std::stod(cells[4]);
        curve.rows.push_back(row);
        if (!cells[5].empty()) curve.slope[row.config] = std::stod(cells[5]);
    }
    return curve;
}

}  // namespace har
