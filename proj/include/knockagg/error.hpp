#pragma once

#include <stdexcept>
#include <string>

namespace knockagg {

enum class ErrorCode {
    invalid_input,
    singular_design,
    insufficient_rows,
    not_psd,
    degenerate_feature,
    convergence,
    protocol,
    length,
    config,
    invalid_confidence,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_input: return "invalid-input";
        case ErrorCode::singular_design: return "singular-design";
        case ErrorCode::insufficient_rows: return "insufficient-rows";
        case ErrorCode::not_psd: return "not-psd";
        case ErrorCode::degenerate_feature: return "degenerate-feature";
        case ErrorCode::convergence: return "convergence";
        case ErrorCode::protocol: return "protocol";
        case ErrorCode::length: return "length";
        case ErrorCode::config: return "config";
        case ErrorCode::invalid_confidence: return "invalid-confidence";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    /// Runtime failures (solver did not converge) as opposed to bad input.
    bool is_runtime() const noexcept { return code_ == ErrorCode::convergence; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) fail(code, what);
}

}  // namespace knockagg
