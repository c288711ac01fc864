#pragma once

/**
 * Autoregressive token models (the Follower).
 *
 * A TokenModel answers one question: given a context and a prompt tag, what
 * is the next-token distribution? Everything else (sequence scoring, masked
 * sampling, weight correction) is built on that single pure query.
 *
 * Distributions travel in log space; log(0) is -infinity and is a legal value.
 *
 * Conditioning:
 *  - prompt_tag selects a parameter set ("proposal", "prior", ...). Models that
 *    do not distinguish tags ignore it.
 *  - hints are the particle's "Note to self: ..." lines. Their canonical
 *    serialization is the lines joined with '\n' (hint_key()). Table models can
 *    key rows on it; other toy models ignore hints.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "steersmc/error.hpp"
#include "steersmc/vocabulary.hpp"

namespace steersmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr std::string_view kProposalTag = "proposal";
inline constexpr std::string_view kPriorTag = "prior";

struct ModelQuery {
  std::span<const TokenId> context;
  std::string_view prompt_tag = kProposalTag;
  std::span<const std::string> hints = {};
};

inline std::string hint_key(std::span<const std::string> hints) {
  std::string key;
  for (std::size_t i = 0; i < hints.size(); ++i) {
    if (i) key += '\n';
    key += hints[i];
  }
  return key;
}

/// log(sum(exp(x))) over finite-or-minus-infinity entries.
inline double log_sum_exp(std::span<const double> xs) noexcept {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

inline std::vector<double> to_logprobs(std::span<const double> probs) {
  std::vector<double> out(probs.size());
  std::transform(probs.begin(), probs.end(), out.begin(),
                 [](double p) { return p > 0.0 ? std::log(p) : kNegInf; });
  return out;
}

class TokenModel {
 public:
  virtual ~TokenModel() = default;

  virtual const Vocabulary& vocabulary() const = 0;
  virtual std::string_view kind() const = 0;

  /// Log next-token probabilities, one per vocabulary id.
  virtual std::vector<double> next_logprobs(const ModelQuery& query) const = 0;

  std::vector<double> next_distribution(const ModelQuery& query) const {
    auto lp = next_logprobs(query);
    for (double& x : lp) x = std::exp(x);
    return lp;
  }

 protected:
  void check_context(std::span<const TokenId> ctx) const {
    const auto n = vocabulary().size();
    for (TokenId id : ctx)
      if (id >= n)
        throw SteerError(ErrorKind::InvalidContext,
                         "token id " + std::to_string(id) + " out of range");
  }
};

/// Sum of log next-token probabilities of `continuation` after `prefix`.
inline double sequence_logprob(const TokenModel& model, std::span<const TokenId> prefix,
                               std::span<const TokenId> continuation,
                               std::string_view prompt_tag = kProposalTag,
                               std::span<const std::string> hints = {}) {
  TokenSeq ctx(prefix.begin(), prefix.end());
  ctx.reserve(prefix.size() + continuation.size());
  double total = 0.0;
  for (TokenId tok : continuation) {
    if (tok >= model.vocabulary().size())
      throw SteerError(ErrorKind::InvalidContext,
                       "token id " + std::to_string(tok) + " out of range");
    const auto lp = model.next_logprobs({ctx, prompt_tag, hints});
    total += lp[tok];
    if (total == kNegInf) return kNegInf;
    ctx.push_back(tok);
  }
  return total;
}

class UniformModel final : public TokenModel {
 public:
  explicit UniformModel(Vocabulary vocab) : vocab_(std::move(vocab)) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string_view kind() const override { return "uniform"; }

  std::vector<double> next_logprobs(const ModelQuery& q) const override {
    check_context(q.context);
    return std::vector<double>(vocab_.size(), -std::log(static_cast<double>(vocab_.size())));
  }

 private:
  Vocabulary vocab_;
};

/**
 * Explicit conditional rows keyed on the full context, with a default row
 * for unlisted contexts. Each prompt tag may carry its own row set; tags
 * without one fall back to the base set.
 */
class TableModel final : public TokenModel {
 public:
  struct RowSet {
    // (context, hint key) -> log probabilities. An empty hint key matches any hints.
    std::map<std::pair<TokenSeq, std::string>, std::vector<double>> rows;
    std::vector<double> default_row;
  };

  TableModel(Vocabulary vocab, RowSet base, std::map<std::string, RowSet, std::less<>> tagged = {})
      : vocab_(std::move(vocab)), base_(std::move(base)), tagged_(std::move(tagged)) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string_view kind() const override { return "table"; }

  std::vector<double> next_logprobs(const ModelQuery& q) const override {
    check_context(q.context);
    const RowSet& set = row_set(q.prompt_tag);
    TokenSeq ctx(q.context.begin(), q.context.end());
    if (!q.hints.empty()) {
      if (auto it = set.rows.find({ctx, hint_key(q.hints)}); it != set.rows.end())
        return it->second;
    }
    if (auto it = set.rows.find({std::move(ctx), std::string()}); it != set.rows.end())
      return it->second;
    return set.default_row;
  }

  const RowSet& row_set(std::string_view tag) const {
    if (auto it = tagged_.find(tag); it != tagged_.end()) return it->second;
    return base_;
  }

 private:
  Vocabulary vocab_;
  RowSet base_;
  std::map<std::string, RowSet, std::less<>> tagged_;
};

/// Routes each prompt tag to its own model. All models share one vocabulary.
class TaggedModel final : public TokenModel {
 public:
  TaggedModel(std::shared_ptr<const TokenModel> base,
              std::map<std::string, std::shared_ptr<const TokenModel>, std::less<>> by_tag)
      : base_(std::move(base)), by_tag_(std::move(by_tag)) {
    for (const auto& [tag, m] : by_tag_)
      if (!(m->vocabulary() == base_->vocabulary()))
        throw SteerError(ErrorKind::SchemaViolation,
                         "model for tag '" + tag + "' has a different vocabulary");
  }

  const Vocabulary& vocabulary() const override { return base_->vocabulary(); }
  std::string_view kind() const override { return "tagged"; }

  std::vector<double> next_logprobs(const ModelQuery& q) const override {
    if (auto it = by_tag_.find(q.prompt_tag); it != by_tag_.end())
      return it->second->next_logprobs(q);
    return base_->next_logprobs(q);
  }

 private:
  std::shared_ptr<const TokenModel> base_;
  std::map<std::string, std::shared_ptr<const TokenModel>, std::less<>> by_tag_;
};

}  // namespace steersmc
