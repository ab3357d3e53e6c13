#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "har/paths.hpp"

#include <json.hpp>

namespace har {

enum class DgpModel { Location, LinearRegression };

/// Extra regressor for the linear-regression model: an intercept plus one
/// time-varying AR(1) regressor z_t = mean + w_t, w_t = rho(t/T) w_{t-1} + eps,
/// independent of the error process.
struct RegressorSpec {
    double mean = 0.0;
    ScalarPath rho{0.0};
    ScalarPath sigma2{1.0};
};

/// A simulated data-generating process: y_t = x_t' beta + e_t with e_t a
/// time-varying Gaussian AR(1). All second moments have closed forms, which
/// is what makes these processes usable as oracles.
struct DgpSpec {
    DgpModel model = DgpModel::Location;
    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(1);
    ScalarPath error_rho{0.0};
    ScalarPath error_sigma2{1.0};
    std::optional<RegressorSpec> regressor;

    /// Local alternative: simulate() draws from beta0 + (offset/sqrt(T)) *
    /// direction. Size experiments leave the offset at zero.
    double alternative_offset = 0.0;
    Eigen::VectorXd alternative_direction;  // defaults to e_1 when empty

    int p() const { return model == DgpModel::Location ? 1 : 2; }
    void validate() const;
};

struct SamplePath {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;  // T x p, first column is the intercept
    std::uint64_t seed = 0;
    std::string source;

    int T() const { return static_cast<int>(y.size()); }
    int p() const { return static_cast<int>(x.cols()); }
};

/// Gaussian recursion with parameters frozen at u = 0 for the burn-in
/// (5 * ceil(1/(1 - rho_max)) steps, initial state from the first segment's
/// stationary law). Identical (spec, T, seed) give bit-identical output.
SamplePath simulate(const DgpSpec& spec, int T, std::uint64_t seed);

/// Local long-run variance Omega(u) of the score process V_t = x_t e_t.
/// Throws BreakPoint when u sits exactly on a discontinuity of the paths.
Eigen::MatrixXd local_lrv(const DgpSpec& spec, double u);

/// Integrated long-run variance: int_0^1 Omega(u) du.
Eigen::MatrixXd integrated_lrv(const DgpSpec& spec);

/// Exact Var(T^{-1/2} S_T) from the finite-T autocovariances of {V_t}.
/// Dense computation, capped at T <= 5000.
Eigen::MatrixXd exact_scaled_sum_variance(const DgpSpec& spec, int T);

/// Dense T x T autocovariance matrix of the (scalar) error process. Used by
/// the finite-sample cumulant machinery; location model only.
Eigen::MatrixXd error_autocovariance_matrix(const DgpSpec& spec, int T);

/// Nuisance curves as paths, for feeding the limit-distribution simulator.
VariancePath variance_path(const DgpSpec& spec);
RegressorMomentPath moment_path(const DgpSpec& spec);

// JSON round trip for DgpSpec; CSV round trip for SamplePath (`t,y,x1..xp`).
DgpSpec dgp_from_json(const nlohmann::json& j);
nlohmann::json dgp_to_json(const DgpSpec& spec);
void write_sample_csv(std::ostream& os, const SamplePath& sample);
SamplePath read_sample_csv(std::istream& is);

}  // namespace har
