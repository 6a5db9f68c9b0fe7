#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace protex {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  StorageError,
  NotFound,
  // document_ingest
  MissingManifest,
  PageCountMismatch,
  UnreadablePage,
  InvalidPackage,
  // chunker
  UnknownStrategy,
  // retrieval
  EmbeddingProviderError,
  EmptyIndex,
  DimensionMismatch,
  ZeroNormVector,
  // schema_registry
  RegistryIntegrityError,
  UnknownElement,
  UnknownCategory,
  // gateway / extraction
  ProviderError,
  ContextLimitExceeded,
  BatchLimitExceeded,
  ParseFailure,
  EmptyContext,
  // soe
  NoPageImages,
  NoTablesDetected,
  DetectorUnavailable,
  ConflictingVisitTime,
  // evaluation
  JudgeOutputInvalid,
  NoPositiveWeightScores,
  // adjudication / review
  NTooLarge,
  AlreadyDecided,
  UnknownRun,
  ValidationFailed,
};

std::string_view to_string(ErrorCode code);

/// Base exception for all pipeline failures. The code is stable and is what
/// callers, persisted results and HTTP error payloads key on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Failure tied to one item of a batched request (e.g. one text of an
/// embedding batch).
class BatchItemError : public Error {
 public:
  BatchItemError(ErrorCode code, std::size_t index, const std::string& message)
      : Error(code, message), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace protex
