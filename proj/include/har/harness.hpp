#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/dgp.hpp"
#include "har/inference.hpp"

namespace har {

/// One test to evaluate per replication: statistic, kernel, bandwidth and the
/// critical-value source.
struct TestConfig {
    std::string name;
    StatKind statistic = StatKind::TFixedB;
    LagKernelId kernel = LagKernelId::Bartlett;
    double b = 1.0;             // fixed-b bandwidth
    double bt = 0.0;            // HAC bandwidth; 0 means use bt_rule
    std::string bt_rule = "inverse-sqrt";  // b_T = T^{-1/2}
    CvSource cv_source = CvSource::Standard;

    double hac_bandwidth(int T) const;
};

/// Declarative Monte Carlo study. reps may be a single count or one per T.
struct ExperimentSpec {
    std::string name = "experiment";
    DgpSpec dgp;
    std::vector<int> T_list;
    std::vector<int> reps;
    std::vector<TestConfig> tests;
    double level = 0.05;
    std::uint64_t seed = 1;
    int threads = 1;

    // Limit-distribution simulation inside the study.
    int grid_n = 200;
    int pivotal_draws = 100000;
    int plugin_draws = 2000;  // per replication; keeps plug-in studies tractable

    // Plug-in curve estimation. Bandwidths default to the module rules; the
    // curve grid is capped so every window keeps enough observations.
    int curve_points = 50;
    LagKernelId curve_lag_kernel = LagKernelId::Parzen;
    TimeKernelId curve_time_kernel = TimeKernelId::Quartic;

    std::vector<double> d_list;  // local-alternative offsets for power runs

    std::optional<HypothesisSpec> hypothesis;  // default: first coefficient at its truth

    void validate() const;
    int reps_for(std::size_t t_index) const;
    HypothesisSpec effective_hypothesis() const;
};

struct RejectionRow {
    int T = 0;
    std::string config;
    double d = 0.0;
    double rate = 0.0;
    double se = 0.0;
    double mean_stat = 0.0;
    double mean_cv = 0.0;
    int reps = 0;
    int successes = 0;
    int failures = 0;
};

struct RejectionTable {
    std::vector<RejectionRow> rows;
};

struct ErpRow {
    std::string config;
    int T = 0;
    double rate = 0.0;
    double se = 0.0;
    double erp = 0.0;
};

struct ErpCurve {
    std::vector<ErpRow> rows;
    std::map<std::string, double> slope;  // log-log slope per config, >= 3 T values
};

/// Size study: d = 0, null imposed. Per-replication errors are counted and
/// reported; the run aborts only if more than 1% of replications fail.
RejectionTable run_size_experiment(const ExperimentSpec& spec);

/// Power study over spec.d_list (beta shifted by d/sqrt(T) along the
/// hypothesis direction). Seeds depend on (T, replication) only, so the d = 0
/// rows coincide with the size study.
RejectionTable run_power_experiment(const ExperimentSpec& spec);

/// |rejection rate - level| per (T, config) plus a fitted log-log slope.
ErpCurve run_erp_study(const ExperimentSpec& spec);

ExperimentSpec experiment_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentSpec& spec);

void write_rejection_csv(std::ostream& os, const RejectionTable& table);
RejectionTable read_rejection_csv(std::istream& is);
void write_erp_csv(std::ostream& os, const ErpCurve& curve);
ErpCurve read_erp_csv(std::istream& is);

/// CLI entry point (subcommands: simulate, estimate, limitdist, test,
/// experiment). Returns the process exit code: 0 ok, 1 usage, 2 data error,
/// 3 numerical error. Errors are emitted on stderr as single-line JSON.
int cli_main(const std::vector<std::string>& args);

}  // namespace har
