#pragma once

/**
 * Monte Carlo inference over steering plans.
 *
 *   run_importance  N particles stepped to completion independently, weights
 *                   self-normalized at the end.
 *   run_smc         all particles advance one step at a time; after each step
 *                   weights are normalized and, when ESS < threshold, the
 *                   population is resampled and every weight is reset to the
 *                   mean pre-resample weight.
 *   run_rejection   N completions, no weights; passers share uniform weight.
 *
 * Randomness: particle slot i at engine step t draws from
 * RandomStream(seed, i, t). Resampling and answer selection use reserved
 * stream ids. Results are therefore bit-identical for any worker count, and
 * SMC with ess_threshold = 0 reproduces importance sampling exactly.
 */

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "steersmc/error.hpp"
#include "steersmc/particle.hpp"
#include "steersmc/plan.hpp"
#include "steersmc/rng.hpp"
#include "steersmc/steering.hpp"
#include "steersmc/token_model.hpp"

namespace steersmc {

enum class Method { smc, importance, rejection };
enum class ResampleScheme { multinomial, systematic };
enum class SelectMode { sample, argmax };

inline constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::smc: return "smc";
    case Method::importance: return "importance";
    case Method::rejection: return "rejection";
  }
  return "?";
}

inline std::optional<Method> method_from(std::string_view s) {
  if (s == "smc") return Method::smc;
  if (s == "importance" || s == "is") return Method::importance;
  if (s == "rejection" || s == "rs") return Method::rejection;
  return std::nullopt;
}

struct InferenceConfig {
  Method method = Method::smc;
  std::size_t n_particles = 16;
  std::optional<double> ess_threshold;  // unset: n_particles / 2
  std::size_t max_steps = 1000;
  std::optional<std::chrono::milliseconds> timeout;
  std::uint64_t seed = 0;
  ResampleScheme resample_scheme = ResampleScheme::multinomial;
  std::size_t workers = 1;
  bool record_trace = false;

  double threshold() const {
    return ess_threshold.value_or(static_cast<double>(n_particles) / 2.0);
  }

  void validate() const {
    if (n_particles == 0) throw SteerError(ErrorKind::SchemaViolation, "n_particles must be positive");
    if (max_steps == 0) throw SteerError(ErrorKind::SchemaViolation, "max_steps must be positive");
    const double tau = threshold();
    if (!(tau >= 0.0) || tau > static_cast<double>(n_particles))
      throw SteerError(ErrorKind::SchemaViolation, "ess_threshold must lie in [0, n_particles]");
  }
};

struct WeightedCandidate {
  TokenSeq tokens;
  std::string text;
  double normalized_weight = 0.0;
  bool passed_check = false;
  double raw_log_weight = kNegInf;
  ParticleStatus status = ParticleStatus::failed;
};

/// Snapshot of the population after one engine step (only kept with record_trace).
struct TraceStep {
  std::size_t step = 0;
  double ess = 0.0;
  bool resampled = false;
  std::vector<double> normalized_weights;
  std::vector<std::string> texts;
};

struct Diagnostics {
  std::vector<double> ess_trace;
  std::vector<std::size_t> resample_events;
  std::vector<TraceStep> trace;
  std::size_t steps_executed = 0;
  std::chrono::nanoseconds wall_time{0};
};

struct InferenceOutcome {
  std::vector<WeightedCandidate> candidates;
  std::optional<TokenSeq> selected;
  std::string selected_text;
  std::optional<std::size_t> selected_index;
  /// log of the mean unnormalized final weight: the normalizing-constant estimate.
  double log_mean_weight = kNegInf;
  Diagnostics diagnostics;
  std::optional<ErrorInfo> error;

  bool ok() const noexcept { return !error.has_value(); }
};

// ---------------------------------------------------------------------------
// Weight utilities
// ---------------------------------------------------------------------------

/// Softmax of log-weights with max subtraction; -inf maps to 0.
inline std::vector<double> normalize_weights(std::span<const double> raw) {
  double mx = kNegInf;
  for (double x : raw) mx = std::max(mx, x);
  if (!std::isfinite(mx))
    throw SteerError(ErrorKind::AllParticlesDead, "no particle has a finite weight");
  std::vector<double> w(raw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    w[i] = raw[i] == kNegInf ? 0.0 : std::exp(raw[i] - mx);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

inline double effective_sample_size(std::span<const double> normalized) {
  double sq = 0.0;
  for (double w : normalized) sq += w * w;
  return 1.0 / sq;
}

/// Ancestor indices for N offspring.
inline std::vector<std::size_t> resample_indices(std::span<const double> normalized,
                                                 ResampleScheme scheme, RandomStream& rng) {
  const std::size_t n = normalized.size();
  std::vector<std::size_t> anc(n);
  if (scheme == ResampleScheme::multinomial) {
    for (auto& a : anc) a = draw_categorical(normalized, rng.uniform());
    return anc;
  }
  // Systematic: one offset, N evenly spaced points through the CDF.
  const double offset = rng.uniform() / static_cast<double>(n);
  double cum = normalized[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = offset + static_cast<double>(i) / static_cast<double>(n);
    while (u >= cum && j + 1 < n) cum += normalized[++j];
    while (normalized[j] == 0.0 && j + 1 < n) cum += normalized[++j];
    anc[i] = j;
  }
  return anc;
}

/// Resamples and resets every log-weight to log(mean of pre-resample weights).
inline std::vector<Particle> resample(std::span<const Particle> particles,
                                      std::span<const double> normalized, ResampleScheme scheme,
                                      RandomStream& rng) {
  std::vector<double> raw(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) raw[i] = particles[i].log_weight;
  const double log_mean = log_sum_exp(raw) - std::log(static_cast<double>(particles.size()));
  std::vector<Particle> out;
  out.reserve(particles.size());
  for (std::size_t a : resample_indices(normalized, scheme, rng)) {
    out.push_back(particles[a]);
    out.back().log_weight = log_mean;
  }
  return out;
}

inline std::size_t select_answer(std::span<const WeightedCandidate> candidates, RandomStream& rng,
                                 SelectMode mode = SelectMode::sample) {
  double total = 0.0;
  for (const auto& c : candidates) total += c.normalized_weight;
  if (candidates.empty() || !(total > 0.0))
    throw SteerError(ErrorKind::AllParticlesDead, "no candidate carries weight");
  if (mode == SelectMode::argmax) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
      if (candidates[i].normalized_weight > candidates[best].normalized_weight) best = i;
    return best;
  }
  std::vector<double> w(candidates.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = candidates[i].normalized_weight;
  return draw_categorical(w, rng.uniform());
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < count; i = next++) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
          next = count;
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Advances one particle by one engine step. Runtime errors other than
/// Timeout kill the particle; Timeout propagates.
inline void advance(const SteeringPlan& plan, const TokenModel& model, Particle& p,
                    std::uint64_t seed, std::size_t slot, std::size_t step, const Deadline& deadline) {
  if (p.status != ParticleStatus::active) return;
  RandomStream rng(seed, static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(step));
  try {
    execute_step(plan, p, model, rng, deadline);
  } catch (const SteerError& e) {
    if (e.kind() == ErrorKind::Timeout) throw;
    p.status = ParticleStatus::failed;
    p.error = ErrorInfo::from(e);
    p.log_weight = kNegInf;
    return;
  }
  if (p.log_weight == kNegInf && p.status == ParticleStatus::active) p.status = ParticleStatus::failed;
}

inline void fail_unfinished(std::vector<Particle>& ps, std::size_t max_steps) {
  for (auto& p : ps) {
    if (p.status != ParticleStatus::active) continue;
    p.status = ParticleStatus::failed;
    p.log_weight = kNegInf;
    p.error = ErrorInfo{ErrorKind::StepBudgetExceeded,
                        "particle still active after max_steps " + std::to_string(max_steps),
                        p.cursor.empty() ? std::nullopt : std::optional<std::size_t>(p.cursor[0].index),
                        p.steps_taken};
  }
}

/// Error for a population with no usable particle: the shared per-particle
/// error when every particle failed the same way, otherwise AllParticlesDead.
inline ErrorInfo population_error(const std::vector<Particle>& ps) {
  std::optional<ErrorInfo> common;
  bool uniform = true;
  std::size_t errored = 0, checks_failed = 0;
  for (const auto& p : ps) {
    if (p.error) {
      ++errored;
      if (!common) common = p.error;
      else if (common->kind != p.error->kind) uniform = false;
    } else {
      uniform = false;
      if (p.passed_check == false) ++checks_failed;
    }
  }
  if (uniform && common) return *common;
  return ErrorInfo{ErrorKind::AllParticlesDead,
                   std::to_string(ps.size()) + " particles dead (" + std::to_string(errored) +
                       " errored, " + std::to_string(checks_failed) + " failed the check)",
                   std::nullopt, std::nullopt};
}

inline std::vector<double> log_weights(const std::vector<Particle>& ps) {
  std::vector<double> raw(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) raw[i] = ps[i].log_weight;
  return raw;
}

inline bool any_finite(std::span<const double> raw) {
  return std::any_of(raw.begin(), raw.end(), [](double x) { return std::isfinite(x); });
}

inline void record_step(Diagnostics& d, const std::vector<Particle>& ps, std::span<const double> w,
                        std::size_t step, double ess, bool resampled, bool keep) {
  d.ess_trace.push_back(ess);
  if (resampled) d.resample_events.push_back(step);
  if (!keep) return;
  TraceStep ts{step, ess, resampled, std::vector<double>(w.begin(), w.end()), {}};
  for (const auto& p : ps) ts.texts.push_back(p.text);
  d.trace.push_back(std::move(ts));
}

/// Fills candidates, selection and the normalizing-constant estimate.
inline void finalize(InferenceOutcome& out, const std::vector<Particle>& ps, std::uint64_t seed,
                     bool weighted) {
  const std::size_t n = ps.size();
  out.candidates.clear();
  for (const auto& p : ps) {
    WeightedCandidate c;
    c.tokens = p.tokens;
    c.text = p.text;
    c.passed_check = p.status == ParticleStatus::done && p.passed_check.value_or(false);
    c.raw_log_weight = p.log_weight;
    c.status = p.status;
    out.candidates.push_back(std::move(c));
  }
  if (weighted) {
    const auto raw = log_weights(ps);
    out.log_mean_weight = log_sum_exp(raw) - std::log(static_cast<double>(n));
    if (!any_finite(raw)) {
      out.error = population_error(ps);
      return;
    }
    const auto w = normalize_weights(raw);
    for (std::size_t i = 0; i < n; ++i) out.candidates[i].normalized_weight = w[i];
  } else {
    const auto passers = static_cast<double>(std::count_if(
        out.candidates.begin(), out.candidates.end(), [](const auto& c) { return c.passed_check; }));
    out.log_mean_weight = passers > 0 ? std::log(passers / static_cast<double>(n)) : kNegInf;
    if (passers == 0) {
      out.error = population_error(ps);
      return;
    }
    for (auto& c : out.candidates) c.normalized_weight = c.passed_check ? 1.0 / passers : 0.0;
  }
  RandomStream rng(seed, kSelectStream, 0);
  const auto idx = select_answer(out.candidates, rng);
  out.selected_index = idx;
  out.selected = out.candidates[idx].tokens;
  out.selected_text = out.candidates[idx].text;
}

/// Steps every particle to completion independently (IS and rejection).
inline InferenceOutcome run_independent(const SteeringPlan& plan, const TokenModel& model,
                                        const InferenceConfig& cfg, bool weighted) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Deadline deadline = cfg.timeout ? Deadline(*cfg.timeout) : Deadline();
  InferenceOutcome out;
  std::vector<Particle> ps(cfg.n_particles);
  std::vector<std::size_t> steps(cfg.n_particles, 0);
  try {
    parallel_for(ps.size(), cfg.workers, [&](std::size_t i) {
      while (ps[i].status == ParticleStatus::active && steps[i] < cfg.max_steps) {
        advance(plan, model, ps[i], cfg.seed, i, steps[i], deadline);
        ++steps[i];
      }
    });
    fail_unfinished(ps, cfg.max_steps);
  } catch (const SteerError& e) {
    out.error = ErrorInfo::from(e);
  }
  out.diagnostics.steps_executed = *std::max_element(steps.begin(), steps.end());
  if (!out.error) {
    finalize(out, ps, cfg.seed, weighted);
    std::vector<double> w;
    for (const auto& c : out.candidates) w.push_back(c.normalized_weight);
    if (!out.error)
      record_step(out.diagnostics, ps, w, out.diagnostics.steps_executed, effective_sample_size(w),
                  false, cfg.record_trace);
  } else {
    for (const auto& p : ps)
      out.candidates.push_back({p.tokens, p.text, 0.0, false, p.log_weight, p.status});
  }
  out.diagnostics.wall_time = std::chrono::steady_clock::now() - t0;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public runners
// ---------------------------------------------------------------------------

inline InferenceOutcome run_importance(const SteeringPlan& plan, const TokenModel& model,
                                       const InferenceConfig& cfg) {
  return detail::run_independent(plan, model, cfg, true);
}

inline InferenceOutcome run_rejection(const SteeringPlan& plan, const TokenModel& model,
                                      const InferenceConfig& cfg) {
  return detail::run_independent(plan, model, cfg, false);
}

inline InferenceOutcome run_smc(const SteeringPlan& plan, const TokenModel& model,
                                const InferenceConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Deadline deadline = cfg.timeout ? Deadline(*cfg.timeout) : Deadline();
  const double tau = cfg.threshold();
  InferenceOutcome out;
  auto& diag = out.diagnostics;
  std::vector<Particle> ps(cfg.n_particles);

  try {
    for (std::size_t t = 0; t < cfg.max_steps; ++t) {
      deadline.check();
      detail::parallel_for(ps.size(), cfg.workers, [&](std::size_t i) {
        detail::advance(plan, model, ps[i], cfg.seed, i, t, deadline);
      });
      diag.steps_executed = t + 1;
      if (t + 1 == cfg.max_steps) detail::fail_unfinished(ps, cfg.max_steps);

      const auto raw = detail::log_weights(ps);
      if (!detail::any_finite(raw)) break;  // finalize reports the error
      auto w = normalize_weights(raw);
      const double ess = effective_sample_size(w);
      const bool do_resample = ess < tau;
      if (do_resample) {
        RandomStream rng(cfg.seed, kResampleStream, static_cast<std::uint32_t>(t));
        ps = resample(ps, w, cfg.resample_scheme, rng);
      }
      detail::record_step(diag, ps, w, t, ess, do_resample, cfg.record_trace);
      const bool all_stopped = std::none_of(ps.begin(), ps.end(), [](const Particle& p) {
        return p.status == ParticleStatus::active;
      });
      if (all_stopped) break;
    }
  } catch (const SteerError& e) {
    out.error = ErrorInfo::from(e);
    for (const auto& p : ps)
      out.candidates.push_back({p.tokens, p.text, 0.0, false, p.log_weight, p.status});
    diag.wall_time = std::chrono::steady_clock::now() - t0;
    return out;
  }
  detail::finalize(out, ps, cfg.seed, true);
  diag.wall_time = std::chrono::steady_clock::now() - t0;
  return out;
}

inline InferenceOutcome run_inference(const SteeringPlan& plan, const TokenModel& model,
                                      const InferenceConfig& cfg) {
  switch (cfg.method) {
    case Method::smc: return run_smc(plan, model, cfg);
    case Method::importance: return run_importance(plan, model, cfg);
    case Method::rejection: return run_rejection(plan, model, cfg);
  }
  return run_smc(plan, model, cfg);
}

}  // namespace steersmc
