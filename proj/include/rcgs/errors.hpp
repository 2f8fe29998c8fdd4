#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rcgs {

/// Every failure raised by the library carries one of these kinds. The CLI
/// maps each kind onto exactly one process exit code (see exit_code()).
enum class ErrorKind {
  NonFiniteState,
  SingularMap,
  NonDistinctEigenvalues,
  NoSynchronization,
  SingularConjugation,
  DivergentSeries,
  IllConditioned,
  RankDeficientP,
  ObservabilityFailure,
  NotPositiveDefinite,
  SingularEigenbasis,
  NotRotation,
  InsufficientSamples,
  DegenerateTangent,
  ConfigError,
  SchemaError,
  ChecksumMismatch,
  VerificationFailure,
};

inline constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::SingularMap: return "SingularMap";
    case ErrorKind::NonDistinctEigenvalues: return "NonDistinctEigenvalues";
    case ErrorKind::NoSynchronization: return "NoSynchronization";
    case ErrorKind::SingularConjugation: return "SingularConjugation";
    case ErrorKind::DivergentSeries: return "DivergentSeries";
    case ErrorKind::IllConditioned: return "IllConditioned";
    case ErrorKind::RankDeficientP: return "RankDeficientP";
    case ErrorKind::ObservabilityFailure: return "ObservabilityFailure";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::SingularEigenbasis: return "SingularEigenbasis";
    case ErrorKind::NotRotation: return "NotRotation";
    case ErrorKind::InsufficientSamples: return "InsufficientSamples";
    case ErrorKind::DegenerateTangent: return "DegenerateTangent";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::VerificationFailure: return "VerificationFailure";
  }
  return "Unknown";
}

// Exit codes: 0 success, 2 config, 3 convergence gate, 4 rank deficiency,
// 5 non-distinct eigenvalues, 6 no synchronization, 7 verification failure.
inline constexpr int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::SchemaError:
    case ErrorKind::SingularMap:
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::NotRotation:
    case ErrorKind::InsufficientSamples:
      return 2;
    case ErrorKind::DivergentSeries:
    case ErrorKind::IllConditioned:
      return 3;
    case ErrorKind::RankDeficientP:
    case ErrorKind::ObservabilityFailure:
    case ErrorKind::SingularConjugation:
    case ErrorKind::DegenerateTangent:
      return 4;
    case ErrorKind::NonDistinctEigenvalues:
    case ErrorKind::SingularEigenbasis:
      return 5;
    case ErrorKind::NoSynchronization:
    case ErrorKind::NonFiniteState:
      return 6;
    case ErrorKind::ChecksumMismatch:
    case ErrorKind::VerificationFailure:
      return 7;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace rcgs
