#include "chinf/error.h"

namespace chinf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnsupportedModel: return "unsupported-model";
    case ErrorCode::kDegenerateSpectrum: return "degenerate-spectrum";
    case ErrorCode::kConditionC1Violated: return "condition-C1-violated";
    case ErrorCode::kNotHyperbolic: return "not-hyperbolic";
    case ErrorCode::kSubspaceNotGraph: return "subspace-not-graph";
    case ErrorCode::kNoStabilizingSolution: return "no-stabilizing-solution";
    case ErrorCode::kResonantSpectrum: return "resonant-spectrum";
    case ErrorCode::kInconsistentCertificate: return "inconsistent-certificate";
    case ErrorCode::kBvpDiverged: return "bvp-diverged";
    case ErrorCode::kStiffExtension: return "stiff-extension";
    case ErrorCode::kMethodUnavailable: return "method-unavailable";
    case ErrorCode::kGenerationFailed: return "generation-failed";
    case ErrorCode::kTrainingDiverged: return "training-diverged";
    case ErrorCode::kRefineFailed: return "refine-failed";
    case ErrorCode::kInstabilityDetected: return "instability-detected";
    case ErrorCode::kDecayViolation: return "decay-violation";
    case ErrorCode::kEvalError: return "eval-error";
    case ErrorCode::kSyntaxError: return "syntax-error";
    case ErrorCode::kUnknownIdentifier: return "unknown-identifier";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown";
}

}  // namespace chinf
