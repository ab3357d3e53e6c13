#include "har/io.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "har/errors.hpp"

namespace har {

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void write_drawset_csv(std::ostream& os, const LimitDrawSet& set) {
    os << "draw_index,value\n";
    for (std::size_t i = 0; i < set.draws.size(); ++i) {
        os << i << ',' << format_double(set.draws[i]) << '\n';
    }
}

std::vector<double> read_drawset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "draw_index,value") {
        throw Error(ErrorCode::DataError, "draw CSV must start with 'draw_index,value'");
    }
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw Error(ErrorCode::DataError, "draw CSV row missing comma");
        }
        values.push_back(std::stod(line.substr(comma + 1)));
    }
    return values;
}

nlohmann::json drawset_metadata_json(const LimitDrawSet& set) {
    nlohmann::json j;
    j["statistic"] = set.statistic;
    j["kernel"] = make_lag_kernel(set.kernel).name();
    j["b"] = set.b;
    j["grid_n"] = set.grid_n;
    j["seed"] = set.seed;
    j["draws"] = set.draws.size();
    j["sigma_source"] = set.sigma_source;
    j["q_source"] = set.q_source;
    if (!set.curve_hash.empty()) j["curve_hash"] = set.curve_hash;
    return j;
}

void write_quantile_csv(std::ostream& os, const CriticalValueTable& table) {
    os << "level,quantile,mc_se\n";
    for (const auto& row : table.rows) {
        os << format_double(row.level) << ',' << format_double(row.value) << ','
           << format_double(row.mc_se) << '\n';
    }
}

CriticalValueTable read_quantile_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "level,quantile,mc_se") {
        throw Error(ErrorCode::DataError, "quantile CSV has an unexpected header");
    }
    CriticalValueTable table;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != 3) {
            throw Error(ErrorCode::DataError, "quantile CSV row has wrong arity");
        }
        table.rows.push_back({row[0], row[1], row[2]});
    }
    return table;
}

void write_curve_csv(std::ostream& os, const LocalLrvCurve& curve,
                     const std::vector<double>& q_curve) {
    if (curve.dim() != 1) {
        throw Error(ErrorCode::OutOfRange, "curve CSV export handles scalar curves only");
    }
    const bool with_q = !q_curve.empty();
    if (with_q && static_cast<int>(q_curve.size()) != curve.points()) {
        throw Error(ErrorCode::OutOfRange, "q curve length must match the grid");
    }
    os << (with_q ? "u,omega_hat,sigma_hat,q_hat\n" : "u,omega_hat,sigma_hat\n");
    for (int i = 0; i < curve.points(); ++i) {
        os << format_double(curve.grid[i]) << ',' << format_double(curve.omega_at(i))
           << ',' << format_double(curve.sigma_at(i));
        if (with_q) os << ',' << format_double(q_curve[i]);
        os << '\n';
    }
}

CurveCsv read_curve_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) {
        throw Error(ErrorCode::DataError, "curve CSV is empty");
    }
    bool with_q = false;
    if (line == "u,omega_hat,sigma_hat,q_hat") {
        with_q = true;
    } else if (line != "u,omega_hat,sigma_hat") {
        throw Error(ErrorCode::DataError, "curve CSV has an unexpected header");
    }
    std::vector<double> us, omegas, sigmas, qs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != (with_q ? 4u : 3u)) {
            throw Error(ErrorCode::DataError, "curve CSV row has wrong arity");
        }
        us.push_back(row[0]);
        omegas.push_back(row[1]);
        sigmas.push_back(row[2]);
        if (with_q) qs.push_back(row[3]);
    }
    CurveCsv out;
    out.curve.grid = Eigen::Map<Eigen::VectorXd>(us.data(), static_cast<int>(us.size()));
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        Eigen::MatrixXd om(1, 1), sg(1, 1);
        om(0, 0) = omegas[i];
        sg(0, 0) = sigmas[i];
        out.curve.omega.push_back(om);
        out.curve.sigma.push_back(sg);
    }
    out.q_curve = qs;
    return out;
}

nlohmann::json lrv_to_json(const LrvEstimate& estimate) {
    nlohmann::json j;
    j["kind"] = estimate.kind == LrvKind::Hac ? "hac" : "fixed-b";
    j["kernel"] = make_lag_kernel(estimate.kernel).name();
    j["bandwidth"] = estimate.bandwidth;
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < estimate.value.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < estimate.value.cols(); ++c) row.push_back(estimate.value(i, c));
        rows.push_back(row);
    }
    j["value"] = rows;
    return j;
}

nlohmann::json test_result_to_json(const TestResult& result) {
    nlohmann::json j;
    j["stat"] = result.statistic;
    j["kind"] = stat_kind_name(result.kind);
    j["cv_source"] = cv_source_name(result.source);
    j["level"] = result.level;
    j["cv"] = result.critical_value;
    j["cv_se"] = result.cv_mc_se;
    j["reject"] = result.reject;
    j["pvalue"] = result.p_value;
    return j;
}

}  // namespace har
