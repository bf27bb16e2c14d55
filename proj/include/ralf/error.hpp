#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ralf {

enum class ErrorCode {
  DimensionMismatch,
  DuplicateName,
  ZeroNormRow,
  NonFiniteValue,
  KTooLarge,
  ZeroNormQuery,
  EmptyStoreAfterFilter,
  MTooLarge,
  NTooLarge,
  UnknownCategory,
  UnknownName,
  AlignmentMismatch,
  NovelLeakage,
  InvalidRecord,
  ShapeMismatch,
  NonFiniteIntermediate,
  NonFiniteGradient,
  DivergenceDetected,
  LengthMismatch,
  BadTruncate,
  InvalidArgument,
  FormatError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Every module error surfaces as this exception; `code()` is the
/// machine-readable tag the CLI reports.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ralf
