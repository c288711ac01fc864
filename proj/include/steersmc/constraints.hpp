#pragma once

/**
 * Machine-checkable task constraints and the ground-truth verifier.
 *
 * JSON form of one constraint (the same schema is embedded in plan `check`):
 *   {"kind": "char_count_exact",  "count": 82}
 *   {"kind": "word_count_exact",  "count": 18}
 *   {"kind": "word_count_min",    "count": 9}
 *   {"kind": "positioned_words",  "positions": [4, 8, 11], "words": ["Glasgow", "in", "and"]}
 *   {"kind": "contains_words",    "words": ["have", "rising"]}
 *   {"kind": "forbidden_words",   "words": ["be", "is"]}
 *   {"kind": "max_word_length",   "count": 7}
 *   {"kind": "sentence_count_exact", "count": 3}
 *   {"kind": "sentence_last_words",  "words": ["convention", "president"]}
 *   {"kind": "per_sentence_word_bounds", "min": 12, "max": 20}
 *
 * Word and sentence boundaries follow steersmc/text.hpp. Comparisons are
 * case-sensitive except contains_words.
 */

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "steersmc/error.hpp"
#include "steersmc/text.hpp"

namespace steersmc {

enum class ConstraintKind {
  char_count_exact,
  word_count_exact,
  word_count_min,
  positioned_words,
  contains_words,
  forbidden_words,
  max_word_length,
  sentence_count_exact,
  sentence_last_words,
  per_sentence_word_bounds,
};

inline constexpr std::array<std::string_view, 10> kConstraintKindNames{
    "char_count_exact",     "word_count_exact",    "word_count_min",
    "positioned_words",     "contains_words",      "forbidden_words",
    "max_word_length",      "sentence_count_exact", "sentence_last_words",
    "per_sentence_word_bounds"};

inline constexpr std::string_view to_string(ConstraintKind k) noexcept {
  return kConstraintKindNames[static_cast<std::size_t>(k)];
}

inline std::optional<ConstraintKind> constraint_kind_from(std::string_view name) {
  for (std::size_t i = 0; i < kConstraintKindNames.size(); ++i)
    if (kConstraintKindNames[i] == name) return static_cast<ConstraintKind>(i);
  return std::nullopt;
}

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::char_count_exact;
  std::int64_t count = 0;  // exact/min/max counts
  std::int64_t min = 0;    // per_sentence_word_bounds
  std::int64_t max = 0;
  std::vector<std::int64_t> positions;  // 1-based
  std::vector<std::string> words;

  bool operator==(const ConstraintSpec&) const = default;
};

struct ConstraintResult {
  ConstraintSpec constraint;
  bool passed = false;
  std::string detail;
};

struct VerificationReport {
  bool passed = true;
  std::vector<ConstraintResult> per_constraint;
};

namespace detail {

inline std::string dquote(std::string_view s) { return "\"" + std::string(s) + "\""; }

inline ConstraintResult check_one(const ConstraintSpec& c, std::string_view s) {
  ConstraintResult r{c, true, "ok"};
  auto fail = [&](std::string msg) {
    if (r.passed) r.detail.clear();
    else r.detail += "; ";
    r.passed = false;
    r.detail += std::move(msg);
  };
  const auto words = text::split_words(s);
  const auto n_words = static_cast<std::int64_t>(words.size());

  switch (c.kind) {
    case ConstraintKind::char_count_exact: {
      const auto n = static_cast<std::int64_t>(text::char_count(s));
      if (n != c.count)
        fail("Length is " + std::to_string(n) + " characters (expected " +
             std::to_string(c.count) + ")");
      break;
    }
    case ConstraintKind::word_count_exact:
      if (n_words != c.count)
        fail("has " + std::to_string(n_words) + " words (expected " + std::to_string(c.count) + ")");
      break;
    case ConstraintKind::word_count_min:
      if (n_words < c.count)
        fail("has " + std::to_string(n_words) + " words (expected at least " +
             std::to_string(c.count) + ")");
      break;
    case ConstraintKind::positioned_words:
      for (std::size_t i = 0; i < c.positions.size(); ++i) {
        const auto pos = c.positions[i];
        if (pos > n_words) {
          fail("word " + std::to_string(pos) + " is missing (expected " + dquote(c.words[i]) + ")");
          continue;
        }
        const auto w = text::strip_punct(words[static_cast<std::size_t>(pos - 1)]);
        if (w != c.words[i])
          fail("word " + std::to_string(pos) + " is " + dquote(w) + " (expected " +
               dquote(c.words[i]) + ")");
      }
      break;
    case ConstraintKind::contains_words:
      for (const auto& target : c.words) {
        const auto lt = text::ascii_lower(target);
        const bool found = std::any_of(words.begin(), words.end(), [&](std::string_view w) {
          return text::ascii_lower(text::strip_punct(w)) == lt;
        });
        if (!found) fail("missing word " + dquote(target));
      }
      break;
    case ConstraintKind::forbidden_words:
      for (const auto& target : c.words) {
        const bool found = std::any_of(words.begin(), words.end(), [&](std::string_view w) {
          return text::strip_punct(w) == target;
        });
        if (found) fail("contains forbidden word " + dquote(target));
      }
      break;
    case ConstraintKind::max_word_length:
      for (std::size_t i = 0; i < words.size(); ++i) {
        const auto w = text::strip_punct(words[i]);
        const auto len = static_cast<std::int64_t>(text::char_count(w));
        if (len > c.count)
          fail("word " + std::to_string(i + 1) + " " + dquote(w) + " has " + std::to_string(len) +
               " characters (max " + std::to_string(c.count) + ")");
      }
      break;
    case ConstraintKind::sentence_count_exact: {
      const auto n = static_cast<std::int64_t>(text::split_sentences(s).size());
      if (n != c.count)
        fail("has " + std::to_string(n) + " sentences (expected " + std::to_string(c.count) + ")");
      break;
    }
    case ConstraintKind::sentence_last_words: {
      const auto sentences = text::split_sentences(s);
      for (std::size_t i = 0; i < c.words.size(); ++i) {
        if (i >= sentences.size()) {
          fail("sentence " + std::to_string(i + 1) + " is missing (expected last word " +
               dquote(c.words[i]) + ")");
          continue;
        }
        const auto sw = text::split_words(sentences[i]);
        const auto last = text::strip_punct(sw.back());
        if (last != c.words[i])
          fail("sentence " + std::to_string(i + 1) + " ends with " + dquote(last) +
               " (expected " + dquote(c.words[i]) + ")");
      }
      break;
    }
    case ConstraintKind::per_sentence_word_bounds: {
      const auto sentences = text::split_sentences(s);
      if (sentences.empty()) fail("has no sentences");
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        const auto n = static_cast<std::int64_t>(text::split_words(sentences[i]).size());
        if (n < c.min || n > c.max)
          fail("sentence " + std::to_string(i + 1) + " has " + std::to_string(n) +
               " words (expected " + std::to_string(c.min) + ".." + std::to_string(c.max) + ")");
      }
      break;
    }
  }
  return r;
}

}  // namespace detail

inline VerificationReport verify(std::span<const ConstraintSpec> constraints, std::string_view s) {
  VerificationReport report;
  for (const auto& c : constraints) {
    auto r = detail::check_one(c, s);
    report.passed = report.passed && r.passed;
    report.per_constraint.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

inline void validate(const ConstraintSpec& c, const std::string& where) {
  auto bad = [&](const std::string& field, const std::string& why) {
    throw SteerError(ErrorKind::SchemaViolation, where + "." + field + ": " + why);
  };
  switch (c.kind) {
    case ConstraintKind::char_count_exact:
    case ConstraintKind::word_count_exact:
    case ConstraintKind::word_count_min:
    case ConstraintKind::sentence_count_exact:
    case ConstraintKind::max_word_length:
      if (c.count < 0) bad("count", "must be >= 0");
      break;
    case ConstraintKind::positioned_words:
      if (c.words.empty()) bad("words", "must be non-empty");
      if (c.positions.size() != c.words.size()) bad("positions", "must match words in length");
      for (auto p : c.positions)
        if (p < 1) bad("positions", "positions are 1-based");
      break;
    case ConstraintKind::contains_words:
    case ConstraintKind::forbidden_words:
    case ConstraintKind::sentence_last_words:
      if (c.words.empty()) bad("words", "must be non-empty");
      break;
    case ConstraintKind::per_sentence_word_bounds:
      if (c.min < 0) bad("min", "must be >= 0");
      if (c.min > c.max) bad("max", "min must not exceed max");
      break;
  }
}

inline ConstraintSpec constraint_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw SteerError(ErrorKind::SchemaViolation, where + ": expected an object");
  if (!j.contains("kind") || !j["kind"].is_string())
    throw SteerError(ErrorKind::SchemaViolation, where + ".kind: missing");
  const auto kind = constraint_kind_from(j["kind"].get<std::string>());
  if (!kind)
    throw SteerError(ErrorKind::SchemaViolation,
                     where + ".kind: unknown constraint '" + j["kind"].get<std::string>() + "'");
  ConstraintSpec c;
  c.kind = *kind;
  auto int_field = [&](const char* name, std::int64_t& out, bool required) {
    if (!j.contains(name)) {
      if (required)
        throw SteerError(ErrorKind::SchemaViolation, where + "." + name + ": missing");
      return;
    }
    if (!j[name].is_number_integer())
      throw SteerError(ErrorKind::SchemaViolation, where + "." + name + ": expected an integer");
    out = j[name].get<std::int64_t>();
  };
  try {
    switch (c.kind) {
      case ConstraintKind::char_count_exact:
      case ConstraintKind::word_count_exact:
      case ConstraintKind::word_count_min:
      case ConstraintKind::sentence_count_exact:
      case ConstraintKind::max_word_length:
        int_field("count", c.count, true);
        break;
      case ConstraintKind::positioned_words:
        c.positions = j.at("positions").get<std::vector<std::int64_t>>();
        c.words = j.at("words").get<std::vector<std::string>>();
        break;
      case ConstraintKind::contains_words:
      case ConstraintKind::forbidden_words:
      case ConstraintKind::sentence_last_words:
        c.words = j.at("words").get<std::vector<std::string>>();
        break;
      case ConstraintKind::per_sentence_word_bounds:
        int_field("min", c.min, true);
        int_field("max", c.max, true);
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw SteerError(ErrorKind::SchemaViolation, where + ": " + e.what());
  }
  validate(c, where);
  return c;
}

inline nlohmann::ordered_json to_json(const ConstraintSpec& c) {
  nlohmann::ordered_json j{{"kind", std::string(to_string(c.kind))}};
  switch (c.kind) {
    case ConstraintKind::char_count_exact:
    case ConstraintKind::word_count_exact:
    case ConstraintKind::word_count_min:
    case ConstraintKind::sentence_count_exact:
    case ConstraintKind::max_word_length:
      j["count"] = c.count;
      break;
    case ConstraintKind::positioned_words:
      j["positions"] = c.positions;
      j["words"] = c.words;
      break;
    case ConstraintKind::contains_words:
    case ConstraintKind::forbidden_words:
    case ConstraintKind::sentence_last_words:
      j["words"] = c.words;
      break;
    case ConstraintKind::per_sentence_word_bounds:
      j["min"] = c.min;
      j["max"] = c.max;
      break;
  }
  return j;
}

inline std::vector<ConstraintSpec> constraints_from_json(const nlohmann::json& arr,
                                                         const std::string& where) {
  if (!arr.is_array()) throw SteerError(ErrorKind::SchemaViolation, where + ": expected a list");
  std::vector<ConstraintSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(constraint_from_json(arr[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace steersmc
