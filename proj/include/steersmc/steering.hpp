#pragma once

/**
 * Steering primitives and the plan interpreter.
 *
 * Weight bookkeeping (all in log space):
 *  - sample_token with a mask draws from q(t) = p(t) 1[t allowed] / Z and adds
 *    log Z, so q(t) * exp(update) = p(t) 1[t allowed]: the weighted law over one
 *    masked step is the model restricted to the mask.
 *  - proposal_prior_step draws from the (masked) proposal and adds
 *    log p_prior(t) - log q(t).
 *  - observe_tokens adds the model log-probability of the forced tokens.
 *  - a finished particle whose text fails the plan check gets -inf.
 *
 * Proposal queries include the particle's hints; prior queries do not.
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "steersmc/constraints.hpp"
#include "steersmc/error.hpp"
#include "steersmc/particle.hpp"
#include "steersmc/plan.hpp"
#include "steersmc/rng.hpp"
#include "steersmc/text.hpp"
#include "steersmc/token_model.hpp"

namespace steersmc {

inline constexpr std::string_view kHintPrefix = "Note to self: ";

struct TokenMask {
  std::vector<char> allowed;  // one flag per vocabulary id

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(allowed.begin(), allowed.end(), char{1}));
  }
  bool contains(TokenId id) const { return id < allowed.size() && allowed[id]; }
};

struct StepUpdate {
  TokenSeq appended_tokens;
  double log_score_update = 0.0;
  bool finished = false;
};

// ---------------------------------------------------------------------------
// Text helpers shared by masks, predicates and hints
// ---------------------------------------------------------------------------

/// Text that token `id` would add after `current`.
inline std::string rendered_piece(const Vocabulary& vocab, std::string_view current, TokenId id) {
  if (id == vocab.eos()) return {};
  std::string piece;
  if (vocab.word_level() && !current.empty()) piece = vocab.joiner();
  piece += vocab.text(id);
  return piece;
}

/// Words followed by whitespace; for word-level vocabularies every word counts.
inline std::size_t completed_words(std::string_view s, bool word_level) {
  const auto n = text::split_words(s).size();
  if (word_level || s.empty() || text::is_space(s.back())) return n;
  return n == 0 ? 0 : n - 1;
}

inline bool predicate_holds(const Predicate& p, const Particle& particle, const Vocabulary& vocab,
                            std::size_t start_tokens, std::size_t start_bytes) {
  switch (p.kind) {
    case Predicate::Kind::token_count:
      return static_cast<std::int64_t>(particle.tokens.size() - start_tokens) >= p.count;
    case Predicate::Kind::substring:
      return std::string_view(particle.text).substr(std::min(start_bytes, particle.text.size()))
                 .find(p.text) != std::string_view::npos;
    case Predicate::Kind::eos:
      return particle.eos_emitted;
    case Predicate::Kind::word_count:
      return static_cast<std::int64_t>(completed_words(particle.text, vocab.word_level())) >= p.count;
  }
  return false;
}

/// Built-in hint variables for the particle's current state, plus plan vars.
inline VarMap hint_bindings(const SteeringPlan& plan, const Particle& particle, const Vocabulary& vocab) {
  VarMap b = plan.vars;
  b["chars"] = std::to_string(text::char_count(particle.text));
  b["words"] = std::to_string(text::split_words(particle.text).size());
  b["tokens"] = std::to_string(particle.tokens.size());
  b["text"] = particle.text;
  (void)vocab;
  return b;
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

namespace detail {

inline bool in_class(std::string_view ch, const MaskSpec& m) {
  if (m.chars.find(ch) != std::string::npos) {
    for (const auto& c : text::split_chars(m.chars))
      if (c == ch) return true;
  }
  if (ch.size() != 1) return false;
  const char c = ch[0];
  for (const auto& cls : m.classes) {
    if (cls == "alpha" && ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))) return true;
    if (cls == "upper" && c >= 'A' && c <= 'Z') return true;
    if (cls == "lower" && c >= 'a' && c <= 'z') return true;
    if (cls == "digit" && c >= '0' && c <= '9') return true;
    if (cls == "space" && text::is_space(c)) return true;
    if (cls == "punct" && text::is_punct(c)) return true;
  }
  return false;
}

inline std::string_view partial_word(std::string_view s) {
  std::size_t i = s.size();
  while (i > 0 && !text::is_space(s[i - 1])) --i;
  return s.substr(i);
}

}  // namespace detail

/**
 * Builds the allowed set for `spec` given the particle's current text.
 *
 *  max_remaining_chars: tokens that keep the character count <= total; EOS
 *      always, or (exact) only once the count equals total.
 *  char_class: tokens whose characters all belong to the class.
 *  allowed_words: character vocabularies may only spell a listed word (a
 *      separator or EOS is allowed once the partial word is complete); word
 *      vocabularies may only emit listed words.
 *  token_ids: exactly the listed ids.
 */
inline TokenMask build_mask(const MaskSpec& spec, const Vocabulary& vocab, std::string_view current) {
  TokenMask mask{std::vector<char>(vocab.size(), 0)};
  const TokenId eos = vocab.eos();
  switch (spec.kind) {
    case MaskSpec::Kind::max_remaining_chars: {
      const auto cur = static_cast<std::int64_t>(text::char_count(current));
      for (TokenId t = 0; t < vocab.size(); ++t) {
        if (t == eos) {
          mask.allowed[t] = !spec.exact || cur == spec.total;
          continue;
        }
        const auto add = static_cast<std::int64_t>(text::char_count(rendered_piece(vocab, current, t)));
        mask.allowed[t] = cur + add <= spec.total;
      }
      break;
    }
    case MaskSpec::Kind::char_class:
      for (TokenId t = 0; t < vocab.size(); ++t) {
        if (t == eos) {
          mask.allowed[t] = spec.allow_eos;
          continue;
        }
        const auto chars = text::split_chars(vocab.text(t));
        mask.allowed[t] = !chars.empty() && std::all_of(chars.begin(), chars.end(), [&](const auto& c) {
          return detail::in_class(c, spec);
        });
      }
      break;
    case MaskSpec::Kind::allowed_words: {
      if (vocab.word_level()) {
        for (const auto& w : spec.words)
          if (auto id = vocab.find(w)) mask.allowed[*id] = 1;
        break;
      }
      const std::string partial(detail::partial_word(current));
      const bool complete =
          std::find(spec.words.begin(), spec.words.end(), partial) != spec.words.end();
      for (TokenId t = 0; t < vocab.size(); ++t) {
        if (t == eos) {
          mask.allowed[t] = complete;
          continue;
        }
        const auto& piece = vocab.text(t);
        const std::string cand = partial + piece;
        bool ok = std::any_of(spec.words.begin(), spec.words.end(), [&](const std::string& w) {
          return w.compare(0, cand.size(), cand) == 0 && cand.size() <= w.size();
        });
        if (!ok && complete && !piece.empty())
          ok = text::is_space(piece.front()) || text::is_punct(piece.front());
        mask.allowed[t] = ok;
      }
      break;
    }
    case MaskSpec::Kind::token_ids:
      for (TokenId id : spec.ids)
        if (id < vocab.size()) mask.allowed[id] = 1;
      break;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

inline void append_token(Particle& p, const Vocabulary& vocab, TokenId id) {
  p.tokens.push_back(id);
  vocab.append_rendered(p.text, id);
  if (id == vocab.eos()) p.eos_emitted = true;
}

namespace detail {

struct MaskedDraw {
  TokenId token = 0;
  double log_z = 0.0;     // log of the allowed mass (0 without a mask)
  double log_q = 0.0;     // log probability the draw had under q
};

inline MaskedDraw draw_masked(std::span<const double> logprobs, const TokenMask* mask,
                              RandomStream& rng) {
  std::vector<double> w(logprobs.size());
  for (std::size_t t = 0; t < w.size(); ++t)
    w[t] = (mask == nullptr || mask->contains(static_cast<TokenId>(t))) ? std::exp(logprobs[t]) : 0.0;

  MaskedDraw d;
  if (mask != nullptr) {
    std::vector<double> allowed_lp;
    for (std::size_t t = 0; t < w.size(); ++t)
      if (mask->contains(static_cast<TokenId>(t))) allowed_lp.push_back(logprobs[t]);
    if (allowed_lp.empty()) throw SteerError(ErrorKind::MaskEmpty, "token mask allows no tokens");
    d.log_z = log_sum_exp(allowed_lp);
    if (d.log_z == kNegInf)
      throw SteerError(ErrorKind::MaskEmpty, "token mask excludes every token with nonzero probability");
  }
  const std::size_t idx = draw_categorical(w, rng.uniform());
  if (idx == w.size()) throw SteerError(ErrorKind::MaskEmpty, "next-token distribution has no mass");
  d.token = static_cast<TokenId>(idx);
  d.log_q = logprobs[idx] - d.log_z;
  return d;
}

}  // namespace detail

/// Draws one token from the (masked) model and applies the log Z correction.
inline TokenId sample_token(Particle& p, const TokenModel& model, const TokenMask* mask,
                            RandomStream& rng, std::string_view prompt_tag = kProposalTag) {
  const auto lp = model.next_logprobs({p.tokens, prompt_tag, p.hint_buffer});
  const auto d = detail::draw_masked(lp, mask, rng);
  p.log_weight += d.log_z;
  append_token(p, model.vocabulary(), d.token);
  return d.token;
}

/// Appends forced tokens and multiplies in their model probability.
inline void observe_tokens(Particle& p, const TokenModel& model, std::span<const TokenId> forced,
                           std::string_view prompt_tag = kProposalTag) {
  p.log_weight += sequence_logprob(model, p.tokens, forced, prompt_tag, p.hint_buffer);
  for (TokenId t : forced) append_token(p, model.vocabulary(), t);
}

/// Samples from the masked proposal and reweights toward the prior.
inline TokenId proposal_prior_step(Particle& p, const TokenModel& proposal, std::string_view proposal_tag,
                                   const TokenModel& prior, std::string_view prior_tag,
                                   const TokenMask* mask, RandomStream& rng) {
  if (!(proposal.vocabulary() == prior.vocabulary()))
    throw SteerError(ErrorKind::SchemaViolation, "proposal and prior vocabularies differ");
  const auto lq = proposal.next_logprobs({p.tokens, proposal_tag, p.hint_buffer});
  const auto d = detail::draw_masked(lq, mask, rng);
  const auto lp = prior.next_logprobs({p.tokens, prior_tag, {}});
  p.log_weight += lp[d.token] - d.log_q;
  append_token(p, proposal.vocabulary(), d.token);
  return d.token;
}

inline void inject_hint(Particle& p, std::string_view tmpl, const VarMap& bindings) {
  p.hint_buffer.push_back(std::string(kHintPrefix) + render_template(tmpl, bindings));
}

inline bool run_check(const SteeringPlan& plan, std::string_view text) {
  return verify(plan.check, text).passed;
}

inline bool run_check(const SteeringPlan& plan, const Vocabulary& vocab, std::span<const TokenId> tokens) {
  return run_check(plan, vocab.render(tokens));
}

/// Checks plan parts that depend on the model: forced strings must tokenize
/// and explicit mask ids must exist.
inline void validate_plan(const SteeringPlan& plan, const Vocabulary& vocab) {
  auto walk = [&](auto&& self, const std::vector<Clause>& clauses, const std::string& where) -> void {
    for (std::size_t i = 0; i < clauses.size(); ++i) {
      const auto& c = clauses[i];
      const auto at = where + "[" + std::to_string(i) + "]";
      if (c.kind == ClauseKind::force_string) {
        try {
          (void)vocab.tokenize(c.text);
        } catch (const SteerError& e) {
          throw SteerError(ErrorKind::SchemaViolation, at + ".text: " + e.detail(), i);
        }
      }
      if (c.mask && c.mask->kind == MaskSpec::Kind::token_ids)
        for (TokenId id : c.mask->ids)
          if (id >= vocab.size())
            throw SteerError(ErrorKind::SchemaViolation,
                             at + ".mask.ids: id " + std::to_string(id) + " out of range", i);
      if (c.kind == ClauseKind::loop) self(self, c.body, at + ".body");
    }
  };
  walk(walk, plan.steps, "plan.steps");
}

// ---------------------------------------------------------------------------
// Interpreter
// ---------------------------------------------------------------------------

namespace detail {

/// Clause list addressed by cursor frame `depth`.
inline const std::vector<Clause>& clause_list(const SteeringPlan& plan, const Particle& p,
                                              std::size_t depth) {
  const std::vector<Clause>* list = &plan.steps;
  for (std::size_t k = 0; k < depth; ++k) list = &(*list)[p.cursor[k].index].body;
  return *list;
}

inline void finish(const SteeringPlan& plan, Particle& p, double& delta) {
  p.status = ParticleStatus::done;
  const bool ok = run_check(plan, p.text);
  p.passed_check = ok;
  if (!ok) {
    p.log_weight = kNegInf;
    delta = kNegInf;
  }
}

/// Moves the cursor through loop entries and exits until it rests on a leaf
/// clause (returns true) or the plan is exhausted (returns false).
inline bool settle(const SteeringPlan& plan, Particle& p, const Vocabulary& vocab) {
  while (true) {
    const std::size_t depth = p.cursor.size() - 1;
    const auto& list = clause_list(plan, p, depth);
    auto& frame = p.cursor.back();
    if (frame.index < list.size()) {
      const auto& clause = list[frame.index];
      if (clause.kind != ClauseKind::loop) return true;
      p.cursor.push_back({0, 0, p.tokens.size(), p.text.size()});
      continue;
    }
    if (depth == 0) return false;
    // End of a loop body: one iteration done.
    ++frame.iteration;
    const auto& loop = clause_list(plan, p, depth - 1)[p.cursor[depth - 1].index];
    if (p.eos_emitted ||
        predicate_holds(loop.until, p, vocab, frame.start_tokens, frame.start_bytes)) {
      p.cursor.pop_back();
      ++p.cursor.back().index;
      continue;
    }
    if (frame.iteration >= loop.bound)
      throw SteerError(ErrorKind::StepBudgetExceeded,
                       "loop exceeded " + std::to_string(loop.bound) +
                           " iterations without its exit condition",
                       p.cursor[0].index);
    frame.index = 0;
  }
}

}  // namespace detail

/**
 * Runs the particle's current leaf clause to completion, then advances the
 * cursor. The particle is finished (and checked) when EOS is emitted or the
 * plan is exhausted. Identical inputs and stream state give identical output.
 */
inline StepUpdate execute_step(const SteeringPlan& plan, Particle& p, const TokenModel& model,
                               RandomStream& rng, const Deadline& deadline = {}) {
  StepUpdate up;
  if (p.status != ParticleStatus::active) {
    up.finished = true;
    return up;
  }
  const Vocabulary& vocab = model.vocabulary();
  const std::size_t before = p.tokens.size();
  const double before_weight = p.log_weight;
  double delta = 0.0;
  auto accumulate = [&] {
    if (p.log_weight == kNegInf) delta = kNegInf;
    else delta = p.log_weight - before_weight;
  };
  deadline.check();

  if (!detail::settle(plan, p, vocab)) {
    detail::finish(plan, p, delta);
    up.log_score_update = delta;
    up.finished = true;
    return up;
  }
  const std::size_t top = p.cursor[0].index;
  const Clause& clause = detail::clause_list(plan, p, p.cursor.size() - 1)[p.cursor.back().index];
  const auto max_total = static_cast<std::size_t>(plan.max_tokens);

  try {
    switch (clause.kind) {
      case ClauseKind::sample_until:
      case ClauseKind::masked_sample: {
        const std::size_t start_tokens = p.tokens.size();
        const std::size_t start_bytes = p.text.size();
        std::int64_t drawn = 0;
        while (!p.eos_emitted &&
               !predicate_holds(clause.stop, p, vocab, start_tokens, start_bytes)) {
          if (drawn >= clause.bound)
            throw SteerError(ErrorKind::StepBudgetExceeded,
                             std::string(to_string(clause.kind)) + " drew " +
                                 std::to_string(clause.bound) + " tokens without its stop condition");
          if (p.tokens.size() >= max_total)
            throw SteerError(ErrorKind::StepBudgetExceeded,
                             "plan max_tokens " + std::to_string(plan.max_tokens) + " reached");
          deadline.check();
          std::optional<TokenMask> mask;
          if (clause.mask) mask = build_mask(*clause.mask, vocab, p.text);
          const TokenMask* m = mask ? &*mask : nullptr;
          if (clause.use_prior)
            proposal_prior_step(p, model, plan.proposal_tag, model, plan.prior_tag, m, rng);
          else
            sample_token(p, model, m, rng, plan.proposal_tag);
          ++drawn;
        }
        break;
      }
      case ClauseKind::force_string: {
        const auto forced = vocab.tokenize(clause.text);
        if (p.tokens.size() + forced.size() > max_total)
          throw SteerError(ErrorKind::StepBudgetExceeded,
                           "forcing '" + clause.text + "' exceeds plan max_tokens " +
                               std::to_string(plan.max_tokens));
        observe_tokens(p, model, forced, plan.proposal_tag);
        break;
      }
      case ClauseKind::hint:
        inject_hint(p, clause.text, hint_bindings(plan, p, vocab));
        break;
      case ClauseKind::loop:
        break;  // unreachable: settle() never rests on a loop
    }
    ++p.cursor.back().index;
    ++p.steps_taken;
    accumulate();
    up.appended_tokens.assign(p.tokens.begin() + static_cast<std::ptrdiff_t>(before), p.tokens.end());
    if (p.eos_emitted || !detail::settle(plan, p, vocab)) {
      detail::finish(plan, p, delta);
      up.finished = true;
    }
  } catch (const SteerError& e) {
    if (e.kind() == ErrorKind::Timeout) throw;
    throw e.with_clause(top).with_step(p.steps_taken);
  }
  up.log_score_update = delta;
  return up;
}

}  // namespace steersmc
