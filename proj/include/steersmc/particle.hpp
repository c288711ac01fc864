#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "steersmc/error.hpp"
#include "steersmc/token_model.hpp"
#include "steersmc/vocabulary.hpp"

namespace steersmc {

enum class ParticleStatus : std::uint8_t { active, done, failed };

inline constexpr std::string_view to_string(ParticleStatus s) noexcept {
  switch (s) {
    case ParticleStatus::active: return "active";
    case ParticleStatus::done: return "done";
    case ParticleStatus::failed: return "failed";
  }
  return "?";
}

/// Position inside a (possibly nested) clause list. Frame 0 indexes plan
/// steps; frame k > 0 indexes the body of the loop named by frame k-1.
struct CursorFrame {
  std::size_t index = 0;
  std::int64_t iteration = 0;
  std::size_t start_tokens = 0;
  std::size_t start_bytes = 0;
  bool operator==(const CursorFrame&) const = default;
};

struct Particle {
  TokenSeq tokens;
  std::string text;  // rendering of tokens, kept in sync
  double log_weight = 0.0;
  std::size_t steps_taken = 0;
  ParticleStatus status = ParticleStatus::active;
  std::vector<std::string> hint_buffer;

  std::vector<CursorFrame> cursor{CursorFrame{}};
  bool eos_emitted = false;
  std::optional<bool> passed_check;
  std::optional<ErrorInfo> error;

  bool operator==(const Particle&) const = default;
};

/// Wall-clock limit checked between token draws.
class Deadline {
 public:
  using Clock = std::chrono::steady_clock;

  Deadline() = default;  // never expires
  explicit Deadline(Clock::duration budget) : end_(Clock::now() + budget), armed_(true) {}

  bool expired() const { return armed_ && Clock::now() >= end_; }

  void check() const {
    if (expired()) throw SteerError(ErrorKind::Timeout, "wall-clock timeout exceeded");
  }

 private:
  Clock::time_point end_{};
  bool armed_ = false;
};

}  // namespace steersmc
