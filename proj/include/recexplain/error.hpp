#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace recexplain {

enum class ErrorCode {
    contract,
    io,
    parse,
    format,
    lookup,
    empty_catalog,
    partial_index,
    transport,
    no_script,
    extraction,
    undefined_effect,
    config,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library is an Error. `stage` names the pipeline
// stage that failed ("catalog", "selection", "aspects", "cot_step_2", ...) and
// is empty when the error is raised outside a pipeline run.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message, std::string stage = {})
        : std::runtime_error(std::move(message)), code_(code), stage_(std::move(stage)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& stage() const noexcept { return stage_; }

    // Returns a copy with the stage set, unless one is already present.
    Error with_stage(std::string stage) const {
        Error copy = *this;
        if (copy.stage_.empty()) copy.stage_ = std::move(stage);
        return copy;
    }

private:
    ErrorCode code_;
    std::string stage_;
};

// Backend failure. `retryable` separates transport-class failures (timeouts,
// refused connections, 5xx) from contract-class ones (4xx).
class TransportError : public Error {
public:
    TransportError(std::string message, bool retryable, int attempts = 1, int status = 0)
        : Error(retryable ? ErrorCode::transport : ErrorCode::contract, std::move(message)),
          retryable_(retryable),
          attempts_(attempts),
          status_(status) {}

    bool retryable() const noexcept { return retryable_; }
    int attempts() const noexcept { return attempts_; }
    int status() const noexcept { return status_; }

private:
    bool retryable_;
    int attempts_;
    int status_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::contract: return "contract";
        case ErrorCode::io: return "io";
        case ErrorCode::parse: return "parse";
        case ErrorCode::format: return "format";
        case ErrorCode::lookup: return "lookup";
        case ErrorCode::empty_catalog: return "empty_catalog";
        case ErrorCode::partial_index: return "partial_index";
        case ErrorCode::transport: return "transport";
        case ErrorCode::no_script: return "no_script";
        case ErrorCode::extraction: return "extraction";
        case ErrorCode::undefined_effect: return "undefined_effect";
        case ErrorCode::config: return "config";
    }
    return "unknown";
}

}  // namespace recexplain
