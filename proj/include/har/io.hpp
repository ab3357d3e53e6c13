#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "har/estimators.hpp"
#include "har/inference.hpp"
#include "har/limitdist.hpp"

namespace har {

/// Round-trip-exact formatting used by every CSV writer.
std::string format_double(double x);

void write_drawset_csv(std::ostream& os, const LimitDrawSet& set);
std::vector<double> read_drawset_csv(std::istream& is);
nlohmann::json drawset_metadata_json(const LimitDrawSet& set);

void write_quantile_csv(std::ostream& os, const CriticalValueTable& table);
CriticalValueTable read_quantile_csv(std::istream& is);

/// LocalLrvCurve CSV (`u,omega_hat,sigma_hat[,q_hat]`), scalar curves only.
void write_curve_csv(std::ostream& os, const LocalLrvCurve& curve,
                     const std::vector<double>& q_curve = {});
struct CurveCsv {
    LocalLrvCurve curve;
    std::vector<double> q_curve;
};
CurveCsv read_curve_csv(std::istream& is);

nlohmann::json lrv_to_json(const LrvEstimate& estimate);
nlohmann::json test_result_to_json(const TestResult& result);

}  // namespace har
