#include "cxr/errors.hpp"

namespace cxr {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyReport: return "EmptyReport";
        case ErrorCode::NoUsableSection: return "NoUsableSection";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::AllRecordsInvalid: return "AllRecordsInvalid";
        case ErrorCode::SectionMissing: return "SectionMissing";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::TooFewPairs: return "TooFewPairs";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::IdMismatch: return "IdMismatch";
        case ErrorCode::KernelTooLarge: return "KernelTooLarge";
        case ErrorCode::ZeroNorm: return "ZeroNorm";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::Divergence: return "Divergence";
        case ErrorCode::BadLexicon: return "BadLexicon";
        case ErrorCode::BadModelFile: return "BadModelFile";
        case ErrorCode::InvalidRecord: return "InvalidRecord";
    }
    return "Error";
}

} // namespace cxr
