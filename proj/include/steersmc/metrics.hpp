#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>

#include "steersmc/token_model.hpp"

namespace steersmc {

struct PassSample {
  std::optional<double> log_weight;  // nullopt: null output, weight 0
  bool passed = false;
};

/**
 * Probability that one weight-proportional draw passes:
 * sum over passers of exp(w_i) / sum of exp(w_i). Null outputs weigh 0; a
 * method without weights should pass log_weight = 0 for every sample.
 * Computed with max subtraction, so constant shifts of all weights cancel.
 */
inline double weighted_pass_at_1(std::span<const PassSample> samples) {
  double mx = kNegInf;
  for (const auto& s : samples)
    if (s.log_weight) mx = std::max(mx, *s.log_weight);
  if (!std::isfinite(mx)) return 0.0;
  double total = 0.0, passing = 0.0;
  for (const auto& s : samples) {
    if (!s.log_weight) continue;
    const double w = std::exp(*s.log_weight - mx);
    total += w;
    if (s.passed) passing += w;
  }
  return total > 0.0 ? passing / total : 0.0;
}

/// 1/2 sum |p(s) - count(s)/n| over the union of supports.
template <typename Key>
double total_variation(const std::map<Key, double>& p, const std::map<Key, double>& counts) {
  double n = 0.0;
  for (const auto& [_, c] : counts) n += c;
  double tv = 0.0;
  for (const auto& [k, pk] : p) {
    auto it = counts.find(k);
    const double qk = (it == counts.end() || n == 0.0) ? 0.0 : it->second / n;
    tv += std::abs(pk - qk);
  }
  for (const auto& [k, c] : counts)
    if (!p.count(k)) tv += n == 0.0 ? 0.0 : c / n;
  return 0.5 * tv;
}

/// Mean per-token log-probability under the prior; higher reads as more fluent.
inline double coherency_proxy(std::span<const TokenId> tokens, const TokenModel& prior,
                              std::string_view prior_tag = kPriorTag) {
  if (tokens.empty()) return 0.0;
  return sequence_logprob(prior, {}, tokens, prior_tag) / static_cast<double>(tokens.size());
}

}  // namespace steersmc
