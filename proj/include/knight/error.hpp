#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace knight {

enum class ErrorCode {
  kZeroVector,
  kDimMismatch,
  kEmptyInput,
  kNonFinite,
  kNotNormalized,
  kDuplicateId,
  kEmptyCorpus,
  kEmptyCaption,
  kCountMismatch,
  kMalformedLine,
  kBadMagic,
  kBadVersion,
  kTruncatedPayload,
  kIoError,
  kMissingTensor,
  kUnknownTensor,
  kDuplicateTensor,
  kShapeMismatch,
  kLengthExceeded,
  kNonFiniteGradient,
  kKTooLarge,
  kInvalidArgument,
  kEmptyEvalSet,
  kMissingReference,
  kEmptyPrefix,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. The code identifies the failure
/// class; the message carries context such as a line number or a path.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace knight
