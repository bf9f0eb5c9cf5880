#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdk {

enum class ErrorCode {
  kNonPositiveDepth,
  kResizeDegenerate,
  kSizeMismatch,
  kEmptyInput,
  kEmptyMask,
  kEmptyOverlap,
  kInsufficientPoints,
  kLengthMismatch,
  kShapeMismatch,
  kEmptyDataset,
  kEmptyCloud,
  kDegenerateGeometry,
  kIndexOutOfRange,
  kInvalidArgument,
  kMalformedHeader,
  kTruncatedPayload,
  kUnsupportedBitDepth,
  kUnsupportedFormat,
  kIoFailure,
};

constexpr std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kResizeDegenerate: return "ResizeDegenerate";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kEmptyOverlap: return "EmptyOverlap";
    case ErrorCode::kInsufficientPoints: return "InsufficientPoints";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyCloud: return "EmptyCloud";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kUnsupportedBitDepth: return "UnsupportedBitDepth";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kIoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code. Every failure raised by
/// the library is an `Error`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define MDK_CHECK(cond, code, msg)            \
  do {                                        \
    if (!(cond)) throw ::mdk::Error((code), (msg)); \
  } while (false)

}  // namespace mdk
