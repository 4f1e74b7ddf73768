#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

enum class ErrorCode {
    EmptyReport,
    NoUsableSection,
    IoError,
    AllRecordsInvalid,
    SectionMissing,
    EmptyCorpus,
    EmptyInput,
    TooFewPairs,
    LengthMismatch,
    IdMismatch,
    KernelTooLarge,
    ZeroNorm,
    EmptyText,
    Divergence,
    BadLexicon,
    BadModelFile,
    InvalidRecord,
};

const char* error_code_name(ErrorCode code);

// Domain error. The CLI maps any cxr::Error to exit code 1; usage problems
// are handled separately by the argument parser (exit code 2).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace cxr
