#pragma once

/**
 * Task specifications, task files, and synthetic instance generators.
 *
 * Task file: one JSON object per line,
 *   {"task_type": "sent_02", "prompt_text": "...", "constraints": [...]}
 * Blank lines and lines starting with '#' are ignored.
 */

#include <algorithm>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "steersmc/constraints.hpp"
#include "steersmc/error.hpp"
#include "steersmc/rng.hpp"

namespace steersmc {

struct TaskSpec {
  std::string task_type;
  std::string prompt_text;
  std::vector<ConstraintSpec> constraints;

  bool operator==(const TaskSpec&) const = default;
};

/// Rejects constraint sets that no text can satisfy for obvious reasons.
inline void validate_task(const TaskSpec& t) {
  auto bad = [&](const std::string& why) {
    throw SteerError(ErrorKind::SchemaViolation, "task " + t.task_type + ": " + why);
  };
  std::optional<std::int64_t> chars, words, min_words, sentences;
  std::set<std::string> required, forbidden;
  std::int64_t max_position = 0;
  std::size_t last_words = 0;
  auto exact = [&](std::optional<std::int64_t>& slot, std::int64_t v, const char* what) {
    if (slot && *slot != v) bad(std::string("contradictory ") + what);
    slot = v;
  };
  for (const auto& c : t.constraints) {
    switch (c.kind) {
      case ConstraintKind::char_count_exact: exact(chars, c.count, "character counts"); break;
      case ConstraintKind::word_count_exact: exact(words, c.count, "word counts"); break;
      case ConstraintKind::sentence_count_exact: exact(sentences, c.count, "sentence counts"); break;
      case ConstraintKind::word_count_min: min_words = std::max(min_words.value_or(0), c.count); break;
      case ConstraintKind::positioned_words:
        for (auto p : c.positions) max_position = std::max(max_position, p);
        break;
      case ConstraintKind::contains_words:
        for (const auto& w : c.words) required.insert(text::ascii_lower(w));
        break;
      case ConstraintKind::forbidden_words:
        for (const auto& w : c.words) forbidden.insert(text::ascii_lower(w));
        break;
      case ConstraintKind::sentence_last_words: last_words = std::max(last_words, c.words.size()); break;
      default: break;
    }
  }
  if (words && min_words && *words < *min_words) bad("exact word count below the minimum");
  if (words && max_position > *words) bad("positioned word beyond the exact word count");
  if (sentences && static_cast<std::int64_t>(last_words) > *sentences)
    bad("more sentence-final words than sentences");
  for (const auto& w : required)
    if (forbidden.count(w)) bad("word '" + w + "' is both required and forbidden");
}

inline TaskSpec task_from_json(const nlohmann::json& j, const std::string& where = "task") {
  if (!j.is_object()) throw SteerError(ErrorKind::SchemaViolation, where + ": expected an object");
  TaskSpec t;
  if (!j.contains("task_type") || !j["task_type"].is_string())
    throw SteerError(ErrorKind::SchemaViolation, where + ".task_type: missing");
  t.task_type = j["task_type"].get<std::string>();
  t.prompt_text = j.value("prompt_text", std::string());
  t.constraints = j.contains("constraints") ? constraints_from_json(j["constraints"], where + ".constraints")
                                            : std::vector<ConstraintSpec>{};
  validate_task(t);
  return t;
}

inline nlohmann::ordered_json to_json(const TaskSpec& t) {
  nlohmann::ordered_json cs = nlohmann::ordered_json::array();
  for (const auto& c : t.constraints) cs.push_back(to_json(c));
  return {{"task_type", t.task_type}, {"prompt_text", t.prompt_text}, {"constraints", cs}};
}

inline std::vector<TaskSpec> parse_task_file(std::string_view content) {
  std::vector<TaskSpec> out;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(trimmed);
    } catch (const nlohmann::json::parse_error& e) {
      throw SteerError(ErrorKind::ParseError, "task file line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(task_from_json(j, "line " + std::to_string(lineno)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Task families this generator knows, with their parameter ranges:
///   sent_01  char_count_exact            count in [20, 100]
///   sent_02  word_count_exact n in [10, 20] + 3 positioned words (increasing positions)
///   sent_03  word_count_min in [5, 12] + max_word_length in [4, 8]
///   sent_04  contains_words, 3 distinct pool words
///   para_02  sentence_count_exact in [2, 4] + 3 forbidden pool words
///   para_03  sentence_count_exact in [2, 5] + per_sentence_word_bounds, min in [5, 12], max = min + [4, 10]
///   para_05  sentence_count_exact k in [2, 4] + k sentence-final pool words
inline const std::vector<std::string>& task_families() {
  static const std::vector<std::string> f{"sent_01", "sent_02", "sent_03", "sent_04",
                                          "para_02", "para_03", "para_05"};
  return f;
}

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool{
      "Glasgow", "in",     "and",   "the",    "river",  "city",    "rain",     "have",
      "rising",  "morning", "quiet", "street", "market", "bridge", "music",    "garden",
      "winter",  "light",  "house", "window", "stone",  "harbor",  "evening",  "travel",
      "paper",   "letter", "friend", "summer", "ocean", "forest",  "mountain", "station",
      "convention", "president", "Wisconsin", "Noise", "collection", "Testament", "Series", "be"};
  return pool;
}

namespace detail {

class TaskRng {
 public:
  TaskRng(std::uint64_t seed, std::uint32_t index) : rng_(seed, index, 0x7A5Cu) {}
  std::int64_t between(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(rng_.uniform() * static_cast<double>(hi - lo + 1));
  }
  std::vector<std::string> distinct_words(std::size_t k) {
    std::vector<std::string> pool = word_pool();
    std::vector<std::string> out;
    while (out.size() < k) {
      const auto i = static_cast<std::size_t>(between(0, static_cast<std::int64_t>(pool.size()) - 1));
      out.push_back(pool[i]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    }
    return out;
  }

 private:
  RandomStream rng_;
};

inline std::string ordinal(std::int64_t n) {
  const auto mod100 = n % 100;
  const char* suffix = (mod100 >= 11 && mod100 <= 13) ? "th"
                       : n % 10 == 1                  ? "st"
                       : n % 10 == 2                  ? "nd"
                       : n % 10 == 3                  ? "rd"
                                                      : "th";
  return std::to_string(n) + suffix;
}

inline std::string quoted_list(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ", ";
    out += "'" + words[i] + "'";
  }
  return out;
}

}  // namespace detail

inline std::vector<TaskSpec> generate_task_instances(std::string_view task_type, std::size_t count,
                                                     std::uint64_t seed) {
  const auto& fams = task_families();
  if (std::find(fams.begin(), fams.end(), task_type) == fams.end())
    throw SteerError(ErrorKind::SchemaViolation, "unknown task family '" + std::string(task_type) + "'");
  std::vector<TaskSpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    detail::TaskRng r(seed, static_cast<std::uint32_t>(i));
    TaskSpec t;
    t.task_type = std::string(task_type);
    auto add = [&](ConstraintKind k) -> ConstraintSpec& {
      t.constraints.push_back(ConstraintSpec{});
      t.constraints.back().kind = k;
      return t.constraints.back();
    };
    if (task_type == "sent_01") {
      auto& c = add(ConstraintKind::char_count_exact);
      c.count = r.between(20, 100);
      t.prompt_text = "Please generate a sentence with exactly " + std::to_string(c.count) +
                      " characters. Include whitespace into your character count.";
    } else if (task_type == "sent_02") {
      const auto n = r.between(10, 20);
      add(ConstraintKind::word_count_exact).count = n;
      auto& c = add(ConstraintKind::positioned_words);
      std::set<std::int64_t> pos;
      while (pos.size() < 3) pos.insert(r.between(1, n));
      c.positions.assign(pos.begin(), pos.end());
      c.words = r.distinct_words(3);
      t.prompt_text = "Please generate a sentence:\n1) with exactly " + std::to_string(n) +
                      " words;\n2) with the " + detail::ordinal(c.positions[0]) + ", " +
                      detail::ordinal(c.positions[1]) + ", " + detail::ordinal(c.positions[2]) +
                      " words to be " + detail::quoted_list(c.words) + " respectively.";
    } else if (task_type == "sent_03") {
      const auto n = r.between(5, 12);
      const auto len = r.between(4, 8);
      add(ConstraintKind::word_count_min).count = n;
      add(ConstraintKind::max_word_length).count = len;
      t.prompt_text = "Please generate a sentence:\n1) with at least " + std::to_string(n) +
                      " words;\n2) with all words having at most " + std::to_string(len) + " characters.";
    } else if (task_type == "sent_04") {
      auto& c = add(ConstraintKind::contains_words);
      c.words = r.distinct_words(3);
      t.prompt_text = "Please generate a sentence containing the word " + detail::quoted_list(c.words) + ".";
    } else if (task_type == "para_02") {
      const auto k = r.between(2, 4);
      add(ConstraintKind::sentence_count_exact).count = k;
      auto& c = add(ConstraintKind::forbidden_words);
      c.words = r.distinct_words(3);
      t.prompt_text = "Please generate a paragraph:\n1) with exactly " + std::to_string(k) + " sentences;";
      for (std::size_t w = 0; w < c.words.size(); ++w)
        t.prompt_text += "\n" + std::to_string(w + 2) + ") not containing the word '" + c.words[w] + "';";
    } else if (task_type == "para_03") {
      const auto k = r.between(2, 5);
      add(ConstraintKind::sentence_count_exact).count = k;
      auto& c = add(ConstraintKind::per_sentence_word_bounds);
      c.min = r.between(5, 12);
      c.max = c.min + r.between(4, 10);
      t.prompt_text = "Please generate a paragraph:\n1) with exactly " + std::to_string(k) +
                      " sentences;\n2) with all sentences having at least " + std::to_string(c.min) +
                      " words;\n3) with all sentences having at most " + std::to_string(c.max) + " words.";
    } else {  // para_05
      const auto k = r.between(2, 4);
      add(ConstraintKind::sentence_count_exact).count = k;
      auto& c = add(ConstraintKind::sentence_last_words);
      c.words = r.distinct_words(static_cast<std::size_t>(k));
      t.prompt_text = "Please generate a paragraph:\n1) with exactly " + std::to_string(k) +
                      " sentences;\n2) with sentences having the last word to be " +
                      detail::quoted_list(c.words) + " respectively.";
    }
    validate_task(t);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace steersmc
