#include "har/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "har/errors.hpp"
#include "har/numeric.hpp"
#include "har/rng.hpp"

namespace har {

namespace {

constexpr double kRhoMax = 0.999;

// Local AR(1) quantities at rescaled time u.
double ar1_lrv(double rho, double sigma2) {
    const double d = 1.0 - rho;
    return sigma2 / (d * d);
}

double ar1_variance(double rho, double sigma2) { return sigma2 / (1.0 - rho * rho); }

// sum_k gamma_e(k) gamma_z(k) for two independent AR(1) processes with
// variances ve, vz and coefficients re, rz.
double ar1_cross_lrv(double ve, double re, double vz, double rz) {
    const double q = re * rz;
    return ve * vz * (1.0 + q) / (1.0 - q);
}

std::vector<double> merged_breaks(const DgpSpec& spec) {
    std::vector<double> breaks = spec.error_rho.interior_breaks();
    for (double b : spec.error_sigma2.interior_breaks()) breaks.push_back(b);
    if (spec.regressor) {
        for (double b : spec.regressor->rho.interior_breaks()) breaks.push_back(b);
        for (double b : spec.regressor->sigma2.interior_breaks()) breaks.push_back(b);
    }
    return breaks;
}

int burn_in_length(const ScalarPath& rho) {
    const double rho_max = std::min(kRhoMax, rho.sup_abs());
    return 5 * static_cast<int>(std::ceil(1.0 / (1.0 - rho_max)));
}

// Simulates one tv-AR(1) chain of length T (t = 1..T, parameters at t/T).
Eigen::VectorXd simulate_ar1_chain(const ScalarPath& rho, const ScalarPath& sigma2,
                                   int T, Rng& rng) {
    const double rho0 = rho(0.0);
    const double sd0 = std::sqrt(sigma2(0.0));
    double v = std::sqrt(ar1_variance(rho0, sigma2(0.0))) * rng.normal();
    const int burn = burn_in_length(rho);
    for (int i = 0; i < burn; ++i) {
        v = rho0 * v + sd0 * rng.normal();
    }
    Eigen::VectorXd out(T);
    for (int t = 1; t <= T; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(T);
        v = rho(u) * v + std::sqrt(sigma2(u)) * rng.normal();
        out[t - 1] = v;
    }
    return out;
}

}  // namespace

void DgpSpec::validate() const {
    if (error_rho.sup_abs() > kRhoMax) {
        throw Error(ErrorCode::InvalidSpec, "error AR coefficient must stay within (-1,1)");
    }
    if (error_sigma2.inf() <= 0.0) {
        throw Error(ErrorCode::InvalidSpec, "error innovation variance must be positive");
    }
    if (model == DgpModel::LinearRegression) {
        if (!regressor) {
            throw Error(ErrorCode::InvalidSpec, "linear-regression model needs a regressor spec");
        }
        if (regressor->rho.sup_abs() > kRhoMax) {
            throw Error(ErrorCode::InvalidSpec, "regressor AR coefficient must stay within (-1,1)");
        }
        if (regressor->sigma2.inf() <= 0.0) {
            throw Error(ErrorCode::InvalidSpec, "regressor innovation variance must be positive");
        }
    }
    if (beta0.size() != p()) {
        throw Error(ErrorCode::InvalidSpec, "beta0 has wrong dimension for the model");
    }
}

SamplePath simulate(const DgpSpec& spec, int T, std::uint64_t seed) {
    spec.validate();
    if (T < 10) {
        throw Error(ErrorCode::InvalidSpec, "simulate: T must be at least 10");
    }
    const int p = spec.p();

    // Independent substreams so that adding a regressor never perturbs the
    // error draws for the same seed.
    Rng rng_e(derive_seed(seed, 1));
    const Eigen::VectorXd e = simulate_ar1_chain(spec.error_rho, spec.error_sigma2, T, rng_e);

    SamplePath sample;
    sample.seed = seed;
    sample.source = "simulate";
    sample.x = Eigen::MatrixXd::Ones(T, p);
    if (spec.model == DgpModel::LinearRegression) {
        Rng rng_z(derive_seed(seed, 2));
        const Eigen::VectorXd w =
            simulate_ar1_chain(spec.regressor->rho, spec.regressor->sigma2, T, rng_z);
        sample.x.col(1) = w.array() + spec.regressor->mean;
    }

    Eigen::VectorXd beta = spec.beta0;
    if (spec.alternative_offset != 0.0) {
        Eigen::VectorXd dir = spec.alternative_direction;
        if (dir.size() == 0) {
            dir = Eigen::VectorXd::Zero(p);
            dir[0] = 1.0;
        }
        beta += (spec.alternative_offset / std::sqrt(static_cast<double>(T))) * dir;
    }
    sample.y = sample.x * beta + e;
    return sample;
}

namespace {

Eigen::MatrixXd local_lrv_unchecked(const DgpSpec& spec, double u);

}  // namespace

Eigen::MatrixXd local_lrv(const DgpSpec& spec, double u) {
    spec.validate();
    if (spec.error_rho.at_break(u) || spec.error_sigma2.at_break(u) ||
        (spec.regressor && (spec.regressor->rho.at_break(u) || spec.regressor->sigma2.at_break(u)))) {
        throw Error(ErrorCode::BreakPoint, "local LRV requested exactly at a break point");
    }
    return local_lrv_unchecked(spec, u);
}

namespace {

Eigen::MatrixXd local_lrv_unchecked(const DgpSpec& spec, double u) {
    const double re = spec.error_rho(u);
    const double s2e = spec.error_sigma2(u);
    const double lrv_e = ar1_lrv(re, s2e);
    if (spec.model == DgpModel::Location) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = lrv_e;
        return m;
    }
    const double mu = spec.regressor->mean;
    const double rz = spec.regressor->rho(u);
    const double s2z = spec.regressor->sigma2(u);
    const double ve = ar1_variance(re, s2e);
    const double vz = ar1_variance(rz, s2z);
    Eigen::MatrixXd m(2, 2);
    m(0, 0) = lrv_e;
    m(0, 1) = m(1, 0) = mu * lrv_e;
    m(1, 1) = mu * mu * lrv_e + ar1_cross_lrv(ve, re, vz, rz);
    return m;
}

bool all_paths_constant_on(const DgpSpec& spec, double a, double b) {
    bool constant = spec.error_rho.constant_on(a, b) && spec.error_sigma2.constant_on(a, b);
    if (spec.regressor) {
        constant = constant && spec.regressor->rho.constant_on(a, b) &&
                   spec.regressor->sigma2.constant_on(a, b);
    }
    return constant;
}

}  // namespace

Eigen::MatrixXd integrated_lrv(const DgpSpec& spec) {
    spec.validate();
    const int p = spec.p();
    std::vector<double> knots = merged_breaks(spec);
    knots.push_back(0.0);
    knots.push_back(1.0);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t piece = 0; piece + 1 < knots.size(); ++piece) {
        const double a = knots[piece];
        const double b = knots[piece + 1];
        if (all_paths_constant_on(spec, a, b)) {
            total += (b - a) * local_lrv_unchecked(spec, 0.5 * (a + b));
            continue;
        }
        // Non-constant piece: quadrature, with the right endpoint evaluated
        // one-sided so the neighbouring piece's value never leaks in.
        const double b_inside = std::nextafter(b, a);
        for (int i = 0; i < p; ++i) {
            for (int j = i; j < p; ++j) {
                const double v = integrate(
                    [&](double u) {
                        return local_lrv_unchecked(spec, std::min(u, b_inside))(i, j);
                    },
                    a, b, 1e-10);
                total(i, j) += v;
                total(j, i) = total(i, j);
            }
        }
    }
    return total;
}

namespace {

// Per-index parameter tables for the exact finite-T second moments.
struct Ar1Table {
    std::vector<double> rho;    // rho(t/T), t = 1..T
    std::vector<double> var;    // Var(V_t)
};

Ar1Table ar1_table(const ScalarPath& rho, const ScalarPath& sigma2, int T) {
    Ar1Table tab;
    tab.rho.resize(T + 1);
    tab.var.resize(T + 1);
    tab.rho[0] = rho(0.0);
    tab.var[0] = ar1_variance(rho(0.0), sigma2(0.0));
    for (int t = 1; t <= T; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(T);
        tab.rho[t] = rho(u);
        tab.var[t] = tab.rho[t] * tab.rho[t] * tab.var[t - 1] + sigma2(u);
    }
    return tab;
}

}  // namespace

Eigen::MatrixXd exact_scaled_sum_variance(const DgpSpec& spec, int T) {
    spec.validate();
    if (T > 5000) {
        throw Error(ErrorCode::TooLarge, "exact_scaled_sum_variance: T capped at 5000");
    }
    const Ar1Table etab = ar1_table(spec.error_rho, spec.error_sigma2, T);
    const double tiny = 1e-18;

    if (spec.model == DgpModel::Location) {
        double total = 0.0;
        for (int s = 1; s <= T; ++s) {
            total += etab.var[s];
            double cov = etab.var[s];
            for (int t = s + 1; t <= T; ++t) {
                cov *= etab.rho[t];
                if (std::abs(cov) < tiny) break;
                total += 2.0 * cov;
            }
        }
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = total / static_cast<double>(T);
        return m;
    }

    const Ar1Table ztab = ar1_table(spec.regressor->rho, spec.regressor->sigma2, T);
    const double mu = spec.regressor->mean;
    // cov(V_t, V_s) = gamma_e(t,s) * [[1, mu], [mu, mu^2 + gamma_z(t,s)]]
    double s11 = 0.0, s22 = 0.0;
    for (int s = 1; s <= T; ++s) {
        s11 += etab.var[s];
        s22 += etab.var[s] * (mu * mu + ztab.var[s]);
        double ge = etab.var[s];
        double gz = ztab.var[s];
        for (int t = s + 1; t <= T; ++t) {
            ge *= etab.rho[t];
            gz *= ztab.rho[t];
            if (std::abs(ge) < tiny) break;
            s11 += 2.0 * ge;
            s22 += 2.0 * ge * (mu * mu + gz);
        }
    }
    Eigen::MatrixXd m(2, 2);
    m(0, 0) = s11 / T;
    m(0, 1) = m(1, 0) = mu * s11 / T;
    m(1, 1) = s22 / T;
    return m;
}

Eigen::MatrixXd error_autocovariance_matrix(const DgpSpec& spec, int T) {
    spec.validate();
    if (spec.model != DgpModel::Location) {
        throw Error(ErrorCode::InvalidSpec,
                    "error_autocovariance_matrix: location model only");
    }
    const Ar1Table tab = ar1_table(spec.error_rho, spec.error_sigma2, T);
    Eigen::MatrixXd ups(T, T);
    for (int s = 1; s <= T; ++s) {
        ups(s - 1, s - 1) = tab.var[s];
        double cov = tab.var[s];
        for (int t = s + 1; t <= T; ++t) {
            cov *= tab.rho[t];
            ups(t - 1, s - 1) = cov;
            ups(s - 1, t - 1) = cov;
        }
    }
    return ups;
}

VariancePath variance_path(const DgpSpec& spec) {
    spec.validate();
    if (spec.model == DgpModel::Location) {
        // Piecewise-constant specs keep the closed-form scalar representation.
        bool constant_segments = true;
        for (const auto& s : spec.error_rho.segments()) {
            if (s.value_start != s.value_end) constant_segments = false;
        }
        for (const auto& s : spec.error_sigma2.segments()) {
            if (s.value_start != s.value_end) constant_segments = false;
        }
        if (constant_segments) {
            std::vector<double> knots = merged_breaks(spec);
            knots.push_back(0.0);
            knots.push_back(1.0);
            std::sort(knots.begin(), knots.end());
            knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
            std::vector<ScalarPath::Segment> segs;
            for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
                const double mid = 0.5 * (knots[i] + knots[i + 1]);
                const double v = ar1_lrv(spec.error_rho(mid), spec.error_sigma2(mid));
                segs.push_back({knots[i], knots[i + 1], v, v});
            }
            return MatrixPath::scalar(ScalarPath(std::move(segs)));
        }
    }
    DgpSpec copy = spec;
    return MatrixPath::general(spec.p(), merged_breaks(spec),
                               [copy](double u) { return local_lrv(copy, u); });
}

RegressorMomentPath moment_path(const DgpSpec& spec) {
    spec.validate();
    if (spec.model == DgpModel::Location) {
        return MatrixPath::scalar(ScalarPath(1.0));
    }
    const RegressorSpec reg = *spec.regressor;
    std::vector<double> breaks = reg.rho.interior_breaks();
    for (double b : reg.sigma2.interior_breaks()) breaks.push_back(b);
    return MatrixPath::general(2, breaks, [reg](double u) {
        const double vz = ar1_variance(reg.rho(u), reg.sigma2(u));
        Eigen::MatrixXd q(2, 2);
        q(0, 0) = 1.0;
        q(0, 1) = q(1, 0) = reg.mean;
        q(1, 1) = reg.mean * reg.mean + vz;
        return q;
    });
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

ScalarPath::Segment segment_from_json(const nlohmann::json& j, const char* value_key,
                                      const char* end_key) {
    ScalarPath::Segment s;
    s.u_start = j.at("u_start").get<double>();
    s.u_end = j.at("u_end").get<double>();
    s.value_start = j.at(value_key).get<double>();
    s.value_end = j.contains(end_key) ? j[end_key].get<double>() : s.value_start;
    return s;
}

void paths_from_segments(const nlohmann::json& segments, ScalarPath& rho,
                         ScalarPath& sigma2) {
    std::vector<ScalarPath::Segment> rseg, sseg;
    for (const auto& j : segments) {
        rseg.push_back(segment_from_json(j, "rho", "rho_end"));
        sseg.push_back(segment_from_json(j, "sigma2", "sigma2_end"));
    }
    rho = ScalarPath(std::move(rseg));
    sigma2 = ScalarPath(std::move(sseg));
}

// Exact piecewise-linear resampling onto a union of knots, so two paths with
// different segmentations serialize onto one shared grid.
std::vector<ScalarPath::Segment> resample_segments(const ScalarPath& path,
                                                   const std::vector<double>& knots) {
    std::vector<ScalarPath::Segment> out;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double a = knots[i];
        const double b = knots[i + 1];
        const ScalarPath::Segment* host = nullptr;
        for (const auto& s : path.segments()) {
            if (s.u_start <= a && b <= s.u_end) {
                host = &s;
                break;
            }
        }
        if (host == nullptr) {
            throw Error(ErrorCode::InvalidSpec, "path segments do not cover the knot grid");
        }
        const double w = host->u_end - host->u_start;
        const double t0 = (a - host->u_start) / w;
        const double t1 = (b - host->u_start) / w;
        const double dv = host->value_end - host->value_start;
        out.push_back({a, b, host->value_start + t0 * dv, host->value_start + t1 * dv});
    }
    return out;
}

nlohmann::json segments_to_json(const ScalarPath& rho, const ScalarPath& sigma2) {
    std::vector<double> knots{0.0, 1.0};
    for (const auto& s : rho.segments()) knots.push_back(s.u_start);
    for (const auto& s : sigma2.segments()) knots.push_back(s.u_start);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

    const auto rs = resample_segments(rho, knots);
    const auto ss = resample_segments(sigma2, knots);
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t i = 0; i < rs.size(); ++i) {
        nlohmann::json j;
        j["u_start"] = rs[i].u_start;
        j["u_end"] = rs[i].u_end;
        j["rho"] = rs[i].value_start;
        if (rs[i].value_end != rs[i].value_start) j["rho_end"] = rs[i].value_end;
        j["sigma2"] = ss[i].value_start;
        if (ss[i].value_end != ss[i].value_start) j["sigma2_end"] = ss[i].value_end;
        out.push_back(j);
    }
    return out;
}

}  // namespace

DgpSpec dgp_from_json(const nlohmann::json& j) {
    DgpSpec spec;
    const std::string model = j.value("model", "location");
    if (model == "location") {
        spec.model = DgpModel::Location;
    } else if (model == "linear-regression") {
        spec.model = DgpModel::LinearRegression;
    } else {
        throw Error(ErrorCode::DataError, "unknown model: " + model);
    }
    if (j.contains("segments")) {
        paths_from_segments(j["segments"], spec.error_rho, spec.error_sigma2);
    }
    spec.beta0 = Eigen::VectorXd::Zero(spec.p());
    if (j.contains("beta0")) {
        const auto& b = j["beta0"];
        if (static_cast<int>(b.size()) != spec.p()) {
            throw Error(ErrorCode::DataError, "beta0 has wrong length");
        }
        for (int i = 0; i < spec.p(); ++i) spec.beta0[i] = b[i].get<double>();
    }
    if (spec.model == DgpModel::LinearRegression) {
        RegressorSpec reg;
        const auto& r = j.at("regressor");
        reg.mean = r.value("mean", 0.0);
        if (r.contains("segments")) {
            paths_from_segments(r["segments"], reg.rho, reg.sigma2);
        }
        spec.regressor = reg;
    }
    spec.validate();
    return spec;
}

nlohmann::json dgp_to_json(const DgpSpec& spec) {
    nlohmann::json j;
    j["model"] = spec.model == DgpModel::Location ? "location" : "linear-regression";
    j["beta0"] = std::vector<double>(spec.beta0.data(), spec.beta0.data() + spec.beta0.size());
    j["segments"] = segments_to_json(spec.error_rho, spec.error_sigma2);
    if (spec.regressor) {
        nlohmann::json r;
        r["mean"] = spec.regressor->mean;
        r["segments"] = segments_to_json(spec.regressor->rho, spec.regressor->sigma2);
        j["regressor"] = r;
    }
    return j;
}

void write_sample_csv(std::ostream& os, const SamplePath& sample) {
    os << "t,y";
    for (int c = 0; c < sample.p(); ++c) os << ",x" << (c + 1);
    os << "\n";
    char buf[64];
    for (int t = 0; t < sample.T(); ++t) {
        os << (t + 1);
        std::snprintf(buf, sizeof(buf), ",%.17g", sample.y[t]);
        os << buf;
        for (int c = 0; c < sample.p(); ++c) {
            std::snprintf(buf, sizeof(buf), ",%.17g", sample.x(t, c));
            os << buf;
        }
        os << "\n";
    }
}

SamplePath read_sample_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw Error(ErrorCode::DataError, "sample CSV is empty");
    }
    int p = 0;
    {
        std::stringstream hs(line);
        std::string cell;
        std::vector<std::string> cols;
        while (std::getline(hs, cell, ',')) cols.push_back(cell);
        if (cols.size() < 3 || cols[0] != "t" || cols[1] != "y") {
            throw Error(ErrorCode::DataError, "sample CSV must start with header t,y,x1..");
        }
        p = static_cast<int>(cols.size()) - 2;
    }
    std::vector<double> ys;
    std::vector<std::vector<double>> xs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != p + 2) {
            throw Error(ErrorCode::DataError, "sample CSV row has wrong arity");
        }
        ys.push_back(row[1]);
        xs.emplace_back(row.begin() + 2, row.end());
    }
    const int T = static_cast<int>(ys.size());
    if (T < 3) {
        throw Error(ErrorCode::DataError, "sample CSV has too few rows");
    }
    SamplePath sample;
    sample.source = "csv";
    sample.y = Eigen::Map<Eigen::VectorXd>(ys.data(), T);
    sample.x.resize(T, p);
    for (int t = 0; t < T; ++t) {
        for (int c = 0; c < p; ++c) sample.x(t, c) = xs[t][c];
    }
    return sample;
}

}  // namespace har
