#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "har/estimators.hpp"
#include "har/kernels.hpp"
#include "har/limitdist.hpp"

namespace har {

/// Linear hypothesis R beta = r with rank(R) = q (checked numerically).
struct HypothesisSpec {
    Eigen::MatrixXd R;
    Eigen::VectorXd r;

    int q() const { return static_cast<int>(R.rows()); }
    void validate(int p) const;
};

enum class StatKind { TFixedB, FFixedB, THac };
enum class CvSource { Standard, StationaryPivotal, NonstationaryPlugIn };

const char* stat_kind_name(StatKind k);
const char* cv_source_name(CvSource s);
StatKind stat_kind_from_name(const std::string& name);
CvSource cv_source_from_name(const std::string& name);

struct TestResult {
    double statistic = 0.0;
    StatKind kind = StatKind::TFixedB;
    CvSource source = CvSource::Standard;
    double level = 0.05;
    double critical_value = 0.0;
    double cv_mc_se = 0.0;  // zero for closed-form sources
    bool reject = false;
    double p_value = 1.0;
};

double t_stat_fixed_b(const OlsFit& fit, const HypothesisSpec& hyp, const LagKernel& kernel,
                      double b);
double f_stat_fixed_b(const OlsFit& fit, const HypothesisSpec& hyp, const LagKernel& kernel,
                      double b);
double t_stat_hac(const OlsFit& fit, const HypothesisSpec& hyp, const LagKernel& kernel,
                  double b_T);

/// Everything decide() may need to materialize a simulated critical value.
/// Either a readymade draw set or the estimated curves to build one.
struct DecisionContext {
    const LimitDrawSet* draws = nullptr;
    const LocalLrvCurve* sigma_curve = nullptr;
    const std::vector<double>* q_curve = nullptr;  // optional, curve grid
    LagKernel kernel = make_lag_kernel(LagKernelId::Bartlett);
    double b = 1.0;
    int grid_n = 1000;
    int draw_count = 100000;
    std::uint64_t seed = 0;
    int q = 1;  // restrictions, for pivotal F simulation
};

/// Combines a statistic with a critical value from one of three sources:
/// standard normal / chi-square, the simulated stationary pivotal fixed-b
/// law, or the simulated nonstationary plug-in law. Simulated oracle sets are
/// cached by their metadata.
TestResult decide(double stat, StatKind kind, CvSource source, double level,
                  const DecisionContext& ctx);

/// The cached stationary pivotal draw set behind decide(); the harness reuses
/// it so critical values are computed once per configuration.
const LimitDrawSet& stationary_pivotal_cached(const LagKernel& kernel, double b,
                                              const std::string& statistic, int q,
                                              int grid_n, int draws, std::uint64_t seed);

struct CvEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// Quantile of |draws| (resp. draws) at 1 - level, with its MC standard error.
CvEstimate two_sided_critical_value(const LimitDrawSet& set, double level);
CvEstimate upper_critical_value(const LimitDrawSet& set, double level);

}  // namespace har
