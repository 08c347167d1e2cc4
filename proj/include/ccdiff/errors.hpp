#pragma once

#include <stdexcept>
#include <string>

namespace ccdiff {

enum class ErrorCode {
    NonFiniteState,
    BadParams,
    DegenerateFeature,
    DegenerateColumn,
    PlacementFailure,
    BadConfig,
    BadFile,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::NonFiniteState: return "NonFiniteState";
        case ErrorCode::BadParams: return "BadParams";
        case ErrorCode::DegenerateFeature: return "DegenerateFeature";
        case ErrorCode::DegenerateColumn: return "DegenerateColumn";
        case ErrorCode::PlacementFailure: return "PlacementFailure";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::BadFile: return "BadFile";
    }
    return "Unknown";
}

class CcdiffError : public std::runtime_error {
public:
    CcdiffError(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace ccdiff
