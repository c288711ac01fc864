#pragma once

/**
 * Count-based n-gram model with additive smoothing.
 *
 *   P(tok | ctx) = (count(ctx, tok) + s) / (count(ctx) + s * |V|)
 *
 * ctx is the last (order - 1) tokens, or fewer at the start of a document;
 * counts never cross document boundaries. An unseen context under s = 0 backs
 * off to progressively shorter histories, and to uniform if even the unigram
 * counts are empty. EOS is only counted when documents are closed with it.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "steersmc/error.hpp"
#include "steersmc/text.hpp"
#include "steersmc/token_model.hpp"

namespace steersmc {

enum class Tokenizer { character, whitespace };

struct NgramOptions {
  int order = 2;
  double smoothing = 0.0;
  Tokenizer tokenizer = Tokenizer::character;
  bool eos_at_document_end = false;
  /// Tokens added to the vocabulary even if the corpus never uses them.
  std::vector<std::string> extra_tokens;
};

class NgramModel final : public TokenModel {
 public:
  struct Counts {
    std::vector<std::uint64_t> next;
    std::uint64_t total = 0;
    bool operator==(const Counts&) const = default;
  };

  NgramModel(Vocabulary vocab, int order, double smoothing)
      : vocab_(std::move(vocab)),
        order_(order),
        smoothing_(smoothing),
        suffix_(static_cast<std::size_t>(order)) {}

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::string_view kind() const override { return "ngram"; }
  int order() const noexcept { return order_; }
  double smoothing() const noexcept { return smoothing_; }

  std::vector<double> next_logprobs(const ModelQuery& q) const override {
    check_context(q.context);
    const std::size_t hist =
        std::min(q.context.size(), static_cast<std::size_t>(order_ - 1));
    TokenSeq key(q.context.end() - static_cast<std::ptrdiff_t>(hist), q.context.end());

    const Counts* counts = nullptr;
    if (auto it = primary_.find(key); it != primary_.end()) counts = &it->second;
    if (counts == nullptr && smoothing_ == 0.0) {
      for (std::size_t k = hist; k-- > 0 && counts == nullptr;) {
        TokenSeq shorter(key.end() - static_cast<std::ptrdiff_t>(k), key.end());
        if (auto it = suffix_[k].find(shorter); it != suffix_[k].end()) counts = &it->second;
      }
    }
    const auto v = static_cast<double>(vocab_.size());
    if (counts == nullptr) return std::vector<double>(vocab_.size(), -std::log(v));

    std::vector<double> lp(vocab_.size());
    const double denom = static_cast<double>(counts->total) + smoothing_ * v;
    for (std::size_t t = 0; t < lp.size(); ++t) {
      const double num = static_cast<double>(counts->next[t]) + smoothing_;
      lp[t] = num > 0.0 ? std::log(num / denom) : kNegInf;
    }
    return lp;
  }

  void add_document(std::span<const TokenId> doc, bool close_with_eos) {
    TokenSeq toks(doc.begin(), doc.end());
    if (close_with_eos) toks.push_back(vocab_.eos());
    for (std::size_t pos = 0; pos < toks.size(); ++pos) {
      const std::size_t hist = std::min(pos, static_cast<std::size_t>(order_ - 1));
      const auto end = toks.begin() + static_cast<std::ptrdiff_t>(pos);
      bump(primary_[TokenSeq(end - static_cast<std::ptrdiff_t>(hist), end)], toks[pos]);
      for (std::size_t k = 0; k <= hist && k < suffix_.size(); ++k)
        bump(suffix_[k][TokenSeq(end - static_cast<std::ptrdiff_t>(k), end)], toks[pos]);
    }
  }

  bool same_counts(const NgramModel& o) const {
    return vocab_ == o.vocab_ && order_ == o.order_ && smoothing_ == o.smoothing_ &&
           primary_ == o.primary_ && suffix_ == o.suffix_;
  }

 private:
  void bump(Counts& c, TokenId tok) {
    if (c.next.empty()) c.next.assign(vocab_.size(), 0);
    ++c.next[tok];
    ++c.total;
  }

  Vocabulary vocab_;
  int order_;
  double smoothing_;
  std::map<TokenSeq, Counts> primary_;
  std::vector<std::map<TokenSeq, Counts>> suffix_;
};

/// Splits a corpus into documents at blank lines; trailing newlines are dropped.
inline std::vector<std::string> split_documents(std::string_view corpus) {
  std::vector<std::string> docs;
  std::size_t start = 0;
  while (start <= corpus.size()) {
    std::size_t sep = corpus.find("\n\n", start);
    std::string_view doc =
        corpus.substr(start, sep == std::string_view::npos ? std::string_view::npos : sep - start);
    while (!doc.empty() && (doc.back() == '\n' || doc.back() == '\r')) doc.remove_suffix(1);
    while (!doc.empty() && doc.front() == '\n') doc.remove_prefix(1);
    if (!doc.empty()) docs.emplace_back(doc);
    if (sep == std::string_view::npos) break;
    start = sep + 2;
  }
  return docs;
}

inline NgramModel train_ngram(std::span<const std::string> documents, const NgramOptions& opt) {
  if (opt.order < 1) throw SteerError(ErrorKind::SchemaViolation, "order must be >= 1");
  if (!(opt.smoothing >= 0.0))
    throw SteerError(ErrorKind::SchemaViolation, "smoothing must be >= 0");

  std::vector<std::vector<std::string>> pieces;
  std::set<std::string> symbols(opt.extra_tokens.begin(), opt.extra_tokens.end());
  std::size_t total = 0;
  for (const auto& doc : documents) {
    std::vector<std::string> p;
    if (opt.tokenizer == Tokenizer::character) {
      p = text::split_chars(doc);
    } else {
      for (auto w : text::split_words(doc)) p.emplace_back(w);
    }
    total += p.size();
    symbols.insert(p.begin(), p.end());
    pieces.push_back(std::move(p));
  }
  if (total == 0) throw SteerError(ErrorKind::EmptyCorpus, "corpus has no tokens");

  std::vector<std::string> toks(symbols.begin(), symbols.end());
  toks.emplace_back("<eos>");
  const auto eos = static_cast<TokenId>(toks.size() - 1);
  NgramModel model(Vocabulary(std::move(toks), eos,
                              opt.tokenizer == Tokenizer::whitespace ? " " : ""),
                   opt.order, opt.smoothing);
  for (const auto& p : pieces) {
    TokenSeq ids;
    ids.reserve(p.size());
    for (const auto& s : p) ids.push_back(*model.vocabulary().find(s));
    model.add_document(ids, opt.eos_at_document_end);
  }
  return model;
}

inline NgramModel train_ngram(std::string_view corpus, const NgramOptions& opt) {
  const auto docs = split_documents(corpus);
  return train_ngram(std::span<const std::string>(docs), opt);
}

}  // namespace steersmc
