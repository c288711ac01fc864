#pragma once

/**
 * Exact target distribution of a plan by exhaustive enumeration.
 *
 * Every execution path is walked with no randomness. Instead of simulating a
 * sampler and its weights, each path accumulates the target mass directly:
 *
 *   sampled token t        p(t) 1[t allowed]          (proposal, with hints)
 *                          p_prior(t) 1[t allowed] 1[q(t) > 0]   (use_prior)
 *   forced tokens          product of proposal probabilities
 *   finished sequence      1[check passes]
 *
 * Paths that would raise a runtime error in the engine (empty mask, exceeded
 * clause/loop/plan/step bounds) carry zero mass. The table is the normalized
 * mass per finished token sequence; `normalizer` is the total mass Z.
 */

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "steersmc/error.hpp"
#include "steersmc/plan.hpp"
#include "steersmc/steering.hpp"
#include "steersmc/token_model.hpp"

namespace steersmc {

struct TargetTable {
  std::map<TokenSeq, double> probs;
  double normalizer = 0.0;
};

inline constexpr double kEnumerationLimit = 1e7;

namespace detail {

class PlanEnumerator {
 public:
  PlanEnumerator(const SteeringPlan& plan, const TokenModel& model, std::size_t max_len,
                 std::size_t max_steps)
      : plan_(plan), model_(model), vocab_(model.vocabulary()), max_len_(max_len), max_steps_(max_steps) {}

  std::map<TokenSeq, double> run() {
    walk(State{});
    return mass_;
  }

 private:
  struct Frame {
    std::size_t index = 0;
    std::int64_t iteration = 0;
    std::size_t start_tokens = 0;
    std::size_t start_bytes = 0;
  };
  struct State {
    TokenSeq tokens;
    std::string text;
    std::vector<std::string> hints;
    std::vector<Frame> frames{Frame{}};
    bool eos = false;
    double mass = 1.0;
    std::size_t leaves = 0;  // engine steps consumed
    bool sampling = false;   // inside a sampling clause
    std::size_t clause_start_tokens = 0;
    std::size_t clause_start_bytes = 0;
    std::int64_t drawn = 0;
  };
  enum class Settle { leaf, end, error };

  const std::vector<Clause>& list_at(const State& s, std::size_t depth) const {
    const std::vector<Clause>* list = &plan_.steps;
    for (std::size_t k = 0; k < depth; ++k) list = &(*list)[s.frames[k].index].body;
    return *list;
  }

  bool holds(const Predicate& p, const State& s, std::size_t start_tokens, std::size_t start_bytes) const {
    switch (p.kind) {
      case Predicate::Kind::token_count:
        return static_cast<std::int64_t>(s.tokens.size() - start_tokens) >= p.count;
      case Predicate::Kind::substring:
        return s.text.find(p.text, start_bytes) != std::string::npos;
      case Predicate::Kind::eos:
        return s.eos;
      case Predicate::Kind::word_count:
        return static_cast<std::int64_t>(completed_words(s.text, vocab_.word_level())) >= p.count;
    }
    return false;
  }

  Settle settle(State& s) const {
    while (true) {
      const std::size_t depth = s.frames.size() - 1;
      const auto& list = list_at(s, depth);
      Frame& f = s.frames.back();
      if (f.index < list.size()) {
        if (list[f.index].kind != ClauseKind::loop) return Settle::leaf;
        s.frames.push_back({0, 0, s.tokens.size(), s.text.size()});
        continue;
      }
      if (depth == 0) return Settle::end;
      ++f.iteration;
      const Clause& loop = list_at(s, depth - 1)[s.frames[depth - 1].index];
      if (s.eos || holds(loop.until, s, f.start_tokens, f.start_bytes)) {
        s.frames.pop_back();
        ++s.frames.back().index;
      } else if (f.iteration >= loop.bound) {
        return Settle::error;
      } else {
        f.index = 0;
      }
    }
  }

  void push(State& s, TokenId t) const {
    s.tokens.push_back(t);
    vocab_.append_rendered(s.text, t);
    if (t == vocab_.eos()) s.eos = true;
  }

  void finish(const State& s) {
    if (s.mass == 0.0) return;
    if (!verify(plan_.check, s.text).passed) return;
    mass_[s.tokens] += s.mass;
  }

  void count_node() {
    if (++nodes_ > kEnumerationLimit)
      throw SteerError(ErrorKind::EnumerationTooLarge, "more than 1e7 enumeration nodes");
  }

  void ensure_len(std::size_t len) const {
    if (len > max_len_)
      throw SteerError(ErrorKind::EnumerationTooLarge,
                       "a path needs more than max_len = " + std::to_string(max_len_) + " tokens");
  }

  void walk(State s) {
    const auto max_total = static_cast<std::size_t>(plan_.max_tokens);
    while (true) {
      count_node();
      if (!s.sampling) {
        const Settle st = settle(s);
        if (st == Settle::error) return;
        if (st == Settle::end) return finish(s);
        if (s.leaves >= max_steps_) return;
        const Clause& c = list_at(s, s.frames.size() - 1)[s.frames.back().index];
        if (c.kind == ClauseKind::force_string) {
          const TokenSeq forced = vocab_.tokenize(c.text);
          if (s.tokens.size() + forced.size() > max_total) return;
          ensure_len(s.tokens.size() + forced.size());
          for (TokenId t : forced) {
            const auto lp = model_.next_logprobs({s.tokens, plan_.proposal_tag, s.hints});
            s.mass *= std::exp(lp[t]);
            push(s, t);
          }
          if (s.mass == 0.0) return;
          ++s.leaves;
          ++s.frames.back().index;
          if (s.eos) return finish(s);
          continue;
        }
        if (c.kind == ClauseKind::hint) {
          s.hints.push_back(std::string(kHintPrefix) + render_template(c.text, hint_bindings(plan_, to_particle(s), vocab_)));
          ++s.leaves;
          ++s.frames.back().index;
          continue;
        }
        s.sampling = true;
        s.clause_start_tokens = s.tokens.size();
        s.clause_start_bytes = s.text.size();
        s.drawn = 0;
      }

      const Clause& c = list_at(s, s.frames.size() - 1)[s.frames.back().index];
      if (s.eos || holds(c.stop, s, s.clause_start_tokens, s.clause_start_bytes)) {
        s.sampling = false;
        ++s.leaves;
        ++s.frames.back().index;
        if (s.eos) return finish(s);
        continue;
      }
      if (s.drawn >= c.bound || s.tokens.size() >= max_total) return;
      ensure_len(s.tokens.size() + 1);

      const auto lq = model_.next_logprobs({s.tokens, plan_.proposal_tag, s.hints});
      std::vector<double> lp;
      if (c.use_prior) lp = model_.next_logprobs({s.tokens, plan_.prior_tag, {}});
      std::vector<char> allowed(vocab_.size(), 1);
      if (c.mask) allowed = build_mask(*c.mask, vocab_, s.text).allowed;

      double proposal_mass = 0.0;
      for (std::size_t t = 0; t < allowed.size(); ++t)
        if (allowed[t]) proposal_mass += std::exp(lq[t]);
      if (proposal_mass == 0.0) return;  // MaskEmpty

      for (TokenId t = 0; t < vocab_.size(); ++t) {
        if (!allowed[t] || lq[t] == kNegInf) continue;
        const double factor = c.use_prior ? std::exp(lp[t]) : std::exp(lq[t]);
        if (factor == 0.0) continue;
        State child = s;
        child.mass *= factor;
        push(child, t);
        ++child.drawn;
        walk(std::move(child));
      }
      return;
    }
  }

  static Particle to_particle(const State& s) {
    Particle p;
    p.tokens = s.tokens;
    p.text = s.text;
    return p;
  }

  const SteeringPlan& plan_;
  const TokenModel& model_;
  const Vocabulary& vocab_;
  std::size_t max_len_;
  std::size_t max_steps_;
  double nodes_ = 0;
  std::map<TokenSeq, double> mass_;
};

}  // namespace detail

/**
 * Enumerates every path of `plan` under `model` (sequences up to max_len
 * tokens; defaults to the plan's max_tokens). Throws EnumerationTooLarge when
 * |V|^max_len exceeds 1e7 or a path needs more than max_len tokens.
 */
inline TargetTable brute_force_target(const SteeringPlan& plan, const TokenModel& model,
                                      std::optional<std::size_t> max_len = std::nullopt,
                                      std::size_t max_steps = 1000) {
  const std::size_t len = max_len.value_or(static_cast<std::size_t>(plan.max_tokens));
  const double space = std::pow(static_cast<double>(model.vocabulary().size()), static_cast<double>(len));
  if (space > kEnumerationLimit)
    throw SteerError(ErrorKind::EnumerationTooLarge,
                     "|V|^max_len = " + std::to_string(space) + " exceeds 1e7");
  TargetTable out;
  out.probs = detail::PlanEnumerator(plan, model, len, max_steps).run();
  for (const auto& [_, m] : out.probs) out.normalizer += m;
  if (out.normalizer > 0.0)
    for (auto& [_, m] : out.probs) m /= out.normalizer;
  return out;
}

}  // namespace steersmc
