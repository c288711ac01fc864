#pragma once

/**
 * Typed errors shared by every layer of the engine.
 *
 * Inference-level failures (the ones the outer retry loop reacts to) are a
 * subset of ErrorKind; see is_runtime_error(). Everything is reported through
 * SteerError, which carries the kind plus optional clause/step coordinates so
 * feedback text can point at the failing part of a plan.
 */

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace steersmc {

enum class ErrorKind : std::uint8_t {
  MaskEmpty,
  StepBudgetExceeded,
  Timeout,
  AllParticlesDead,
  RemoteUnavailable,
  ProtocolError,
  ParseError,
  SchemaViolation,
  InvalidContext,
  EmptyCorpus,
  RowNotNormalized,
  UnboundVariable,
  EnumerationTooLarge,
  SourceExhausted,
};

inline constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MaskEmpty: return "MaskEmpty";
    case ErrorKind::StepBudgetExceeded: return "StepBudgetExceeded";
    case ErrorKind::Timeout: return "Timeout";
    case ErrorKind::AllParticlesDead: return "AllParticlesDead";
    case ErrorKind::RemoteUnavailable: return "RemoteUnavailable";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::InvalidContext: return "InvalidContext";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::RowNotNormalized: return "RowNotNormalized";
    case ErrorKind::UnboundVariable: return "UnboundVariable";
    case ErrorKind::EnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorKind::SourceExhausted: return "SourceExhausted";
  }
  return "Unknown";
}

/// Errors an inference run may end with; the outer loop retries on these.
inline constexpr bool is_runtime_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MaskEmpty:
    case ErrorKind::StepBudgetExceeded:
    case ErrorKind::Timeout:
    case ErrorKind::AllParticlesDead:
    case ErrorKind::RemoteUnavailable:
    case ErrorKind::ProtocolError:
    case ErrorKind::ParseError:
    case ErrorKind::SchemaViolation:
    case ErrorKind::UnboundVariable:
      return true;
    default:
      return false;
  }
}

class SteerError : public std::runtime_error {
 public:
  SteerError(ErrorKind kind, std::string detail,
             std::optional<std::size_t> clause = std::nullopt,
             std::optional<std::size_t> step = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind),
        detail_(std::move(detail)),
        clause_(clause),
        step_(step) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }
  std::optional<std::size_t> clause() const noexcept { return clause_; }
  std::optional<std::size_t> step() const noexcept { return step_; }

  SteerError with_clause(std::size_t clause) const {
    return SteerError(kind_, detail_, clause_ ? clause_ : clause, step_);
  }
  SteerError with_step(std::size_t step) const {
    return SteerError(kind_, detail_, clause_, step_ ? step_ : step);
  }

 private:
  ErrorKind kind_;
  std::string detail_;
  std::optional<std::size_t> clause_;
  std::optional<std::size_t> step_;
};

/// Value form of SteerError, stored in outcomes instead of thrown.
struct ErrorInfo {
  ErrorKind kind{ErrorKind::AllParticlesDead};
  std::string detail;
  std::optional<std::size_t> clause;
  std::optional<std::size_t> step;

  static ErrorInfo from(const SteerError& e) {
    return {e.kind(), e.detail(), e.clause(), e.step()};
  }
  bool operator==(const ErrorInfo&) const = default;
};

}  // namespace steersmc
