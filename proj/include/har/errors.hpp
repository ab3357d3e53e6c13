#pragma once

#include <stdexcept>
#include <string>

namespace har {

/// Error categories surfaced by the library. The CLI maps UsageError to exit
/// code 1, DataError to 2 and everything else (numerical conditions) to 3.
enum class ErrorCode {
    InvalidSpec,
    BreakPoint,
    TooLarge,
    RankDeficient,
    OutOfRange,
    UnsupportedKernel,
    NonPsdKernel,
    DegenerateBandwidth,
    DegenerateVariance,
    DegenerateCurve,
    SingularMiddleMatrix,
    MissingContext,
    TooFewDraws,
    BandwidthTooLarge,
    DataError,
    UsageError,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::BreakPoint: return "BreakPoint";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::UnsupportedKernel: return "UnsupportedKernel";
        case ErrorCode::NonPsdKernel: return "NonPsdKernel";
        case ErrorCode::DegenerateBandwidth: return "DegenerateBandwidth";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::DegenerateCurve: return "DegenerateCurve";
        case ErrorCode::SingularMiddleMatrix: return "SingularMiddleMatrix";
        case ErrorCode::MissingContext: return "MissingContext";
        case ErrorCode::TooFewDraws: return "TooFewDraws";
        case ErrorCode::BandwidthTooLarge: return "BandwidthTooLarge";
        case ErrorCode::DataError: return "DataError";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

}  // namespace har
