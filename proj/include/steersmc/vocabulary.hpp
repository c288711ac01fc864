#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "steersmc/error.hpp"
#include "steersmc/text.hpp"

namespace steersmc {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

/**
 * Dense token-id space with a designated EOS id.
 *
 * The joiner decides how tokens render to text: "" for character-level
 * vocabularies (tokens concatenate), " " for word-level ones (tokens are
 * separated by a single space). EOS never renders.
 */
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> tokens, TokenId eos, std::string joiner = "")
      : tokens_(std::move(tokens)), eos_(eos), joiner_(std::move(joiner)) {
    if (tokens_.empty()) throw SteerError(ErrorKind::SchemaViolation, "empty vocabulary");
    if (eos_ >= tokens_.size())
      throw SteerError(ErrorKind::SchemaViolation, "eos id out of range");
    for (TokenId id = 0; id < tokens_.size(); ++id) {
      if (id == eos_) continue;
      if (!index_.emplace(tokens_[id], id).second)
        throw SteerError(ErrorKind::SchemaViolation, "duplicate token '" + tokens_[id] + "'");
    }
  }

  /// Character vocabulary over `chars` (one scalar per entry) with EOS last.
  static Vocabulary characters(const std::vector<std::string>& chars,
                               std::string eos_text = "<eos>") {
    std::vector<std::string> toks = chars;
    toks.push_back(std::move(eos_text));
    const auto eos = static_cast<TokenId>(toks.size() - 1);
    return Vocabulary(std::move(toks), eos, "");
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId eos() const noexcept { return eos_; }
  const std::string& joiner() const noexcept { return joiner_; }
  bool word_level() const noexcept { return !joiner_.empty(); }
  const std::string& text(TokenId id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  bool contains(TokenId id) const noexcept { return id < tokens_.size(); }

  std::optional<TokenId> find(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void append_rendered(std::string& out, TokenId id) const {
    if (id == eos_) return;
    if (word_level() && !out.empty()) out += joiner_;
    out += tokens_.at(id);
  }

  std::string render(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) append_rendered(out, id);
    return out;
  }

  /// Splits text into token ids: per character, or per whitespace word for
  /// word-level vocabularies. Throws InvalidContext for unknown pieces.
  TokenSeq tokenize(std::string_view s) const {
    TokenSeq out;
    auto push = [&](std::string_view piece) {
      auto id = find(piece);
      if (!id)
        throw SteerError(ErrorKind::InvalidContext,
                         "'" + std::string(piece) + "' is not in the vocabulary");
      out.push_back(*id);
    };
    if (word_level()) {
      for (auto w : text::split_words(s)) push(w);
    } else {
      for (const auto& c : text::split_chars(s)) push(c);
    }
    return out;
  }

  bool operator==(const Vocabulary& o) const {
    return tokens_ == o.tokens_ && eos_ == o.eos_ && joiner_ == o.joiner_;
  }

 private:
  std::vector<std::string> tokens_;
  TokenId eos_ = 0;
  std::string joiner_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace steersmc
