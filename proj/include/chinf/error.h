#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chinf {

enum class ErrorCode {
  kInvalidConfig,
  kInvalidArgument,
  kUnsupportedModel,
  kDegenerateSpectrum,
  kConditionC1Violated,
  kNotHyperbolic,
  kSubspaceNotGraph,
  kNoStabilizingSolution,
  kResonantSpectrum,
  kInconsistentCertificate,
  kBvpDiverged,
  kStiffExtension,
  kMethodUnavailable,
  kGenerationFailed,
  kTrainingDiverged,
  kRefineFailed,
  kInstabilityDetected,
  kDecayViolation,
  kEvalError,
  kSyntaxError,
  kUnknownIdentifier,
  kIoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace chinf
