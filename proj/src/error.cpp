#include "protex/error.hpp"

namespace protex {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::StorageError: return "StorageError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::MissingManifest: return "MissingManifest";
    case ErrorCode::PageCountMismatch: return "PageCountMismatch";
    case ErrorCode::UnreadablePage: return "UnreadablePage";
    case ErrorCode::InvalidPackage: return "InvalidPackage";
    case ErrorCode::UnknownStrategy: return "UnknownStrategy";
    case ErrorCode::EmbeddingProviderError: return "EmbeddingProviderError";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::RegistryIntegrityError: return "RegistryIntegrityError";
    case ErrorCode::UnknownElement: return "UnknownElement";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::ContextLimitExceeded: return "ContextLimitExceeded";
    case ErrorCode::BatchLimitExceeded: return "BatchLimitExceeded";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::EmptyContext: return "EmptyContext";
    case ErrorCode::NoPageImages: return "NoPageImages";
    case ErrorCode::NoTablesDetected: return "NoTablesDetected";
    case ErrorCode::DetectorUnavailable: return "DetectorUnavailable";
    case ErrorCode::ConflictingVisitTime: return "ConflictingVisitTime";
    case ErrorCode::JudgeOutputInvalid: return "JudgeOutputInvalid";
    case ErrorCode::NoPositiveWeightScores: return "NoPositiveWeightScores";
    case ErrorCode::NTooLarge: return "NTooLarge";
    case ErrorCode::AlreadyDecided: return "AlreadyDecided";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
  }
  return "Unknown";
}

}  // namespace protex
