#include "ralf/error.hpp"

namespace ralf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateName: return "DuplicateName";
    case ErrorCode::ZeroNormRow: return "ZeroNormRow";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::ZeroNormQuery: return "ZeroNormQuery";
    case ErrorCode::EmptyStoreAfterFilter: return "EmptyStoreAfterFilter";
    case ErrorCode::MTooLarge: return "MTooLarge";
    case ErrorCode::NTooLarge: return "NTooLarge";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::AlignmentMismatch: return "AlignmentMismatch";
    case ErrorCode::NovelLeakage: return "NovelLeakage";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteIntermediate: return "NonFiniteIntermediate";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::BadTruncate: return "BadTruncate";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace ralf
