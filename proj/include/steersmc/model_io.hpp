#pragma once

/**
 * Loading token models from files and model specifiers.
 *
 * Table-model document (JSON):
 *
 *   {
 *     "vocab":   ["a", "b", "<eos>"],        // last entry is EOS
 *     "joiner":  "",                          // optional; " " for word tokens
 *     "rows":    [{"context": ["a"], "dist": [0.7, 0.2, 0.1],
 *                  "hint": "Note to self: ..."}],   // hint optional
 *     "default": "uniform" | [p0, p1, ...],
 *     "tags":    {"prior": {"rows": [...], "default": ...}}   // optional
 *   }
 */

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "steersmc/error.hpp"
#include "steersmc/ngram.hpp"
#include "steersmc/token_model.hpp"

namespace steersmc {

namespace detail {

inline constexpr double kRowTolerance = 1e-6;

inline std::vector<double> parse_row(const nlohmann::json& j, std::size_t vocab_size,
                                     const std::string& where) {
  if (j.is_string() && j.get<std::string>() == "uniform")
    return std::vector<double>(vocab_size, -std::log(static_cast<double>(vocab_size)));
  if (!j.is_array()) throw SteerError(ErrorKind::ParseError, where + ": expected a list of reals");
  if (j.size() != vocab_size)
    throw SteerError(ErrorKind::ParseError, where + ": expected " + std::to_string(vocab_size) +
                                                " entries, got " + std::to_string(j.size()));
  std::vector<double> probs;
  double sum = 0.0;
  for (const auto& x : j) {
    if (!x.is_number()) throw SteerError(ErrorKind::ParseError, where + ": non-numeric entry");
    const double p = x.get<double>();
    if (!(p >= 0.0)) throw SteerError(ErrorKind::RowNotNormalized, where + ": negative entry");
    probs.push_back(p);
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowTolerance) {
    std::ostringstream os;
    os << where << ": row sums to " << sum;
    throw SteerError(ErrorKind::RowNotNormalized, os.str());
  }
  return to_logprobs(probs);
}

inline TableModel::RowSet parse_row_set(const nlohmann::json& j, const Vocabulary& vocab,
                                        const std::string& where) {
  TableModel::RowSet set;
  set.default_row = parse_row(j.value("default", nlohmann::json("uniform")), vocab.size(),
                              where + ".default");
  if (!j.contains("rows")) return set;
  if (!j["rows"].is_array()) throw SteerError(ErrorKind::ParseError, where + ".rows: expected a list");
  std::size_t i = 0;
  for (const auto& row : j["rows"]) {
    const std::string at = where + ".rows[" + std::to_string(i++) + "]";
    if (!row.is_object() || !row.contains("context") || !row.contains("dist"))
      throw SteerError(ErrorKind::ParseError, at + ": needs 'context' and 'dist'");
    TokenSeq ctx;
    for (const auto& t : row["context"]) {
      if (!t.is_string()) throw SteerError(ErrorKind::ParseError, at + ": context entries are strings");
      const auto s = t.get<std::string>();
      auto id = vocab.find(s);
      if (!id && s == vocab.text(vocab.eos())) id = vocab.eos();
      if (!id) throw SteerError(ErrorKind::ParseError, at + ": unknown token '" + s + "'");
      ctx.push_back(*id);
    }
    std::string hint = row.value("hint", std::string());
    auto dist = parse_row(row["dist"], vocab.size(), at + ".dist");
    if (!set.rows.emplace(std::make_pair(std::move(ctx), std::move(hint)), std::move(dist)).second)
      throw SteerError(ErrorKind::ParseError, at + ": duplicate context");
  }
  return set;
}

}  // namespace detail

inline TableModel load_table_model(std::string_view source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw SteerError(ErrorKind::ParseError, e.what());
  }
  if (!j.is_object() || !j.contains("vocab") || !j["vocab"].is_array() || j["vocab"].empty())
    throw SteerError(ErrorKind::ParseError, "table model needs a non-empty 'vocab' list");
  std::vector<std::string> toks;
  for (const auto& t : j["vocab"]) {
    if (!t.is_string()) throw SteerError(ErrorKind::ParseError, "vocab entries are strings");
    toks.push_back(t.get<std::string>());
  }
  const auto eos = static_cast<TokenId>(toks.size() - 1);
  Vocabulary vocab(std::move(toks), eos, j.value("joiner", std::string()));

  auto base = detail::parse_row_set(j, vocab, "table");
  std::map<std::string, TableModel::RowSet, std::less<>> tagged;
  if (j.contains("tags")) {
    if (!j["tags"].is_object()) throw SteerError(ErrorKind::ParseError, "'tags' must be an object");
    for (const auto& [tag, set] : j["tags"].items())
      tagged.emplace(tag, detail::parse_row_set(set, vocab, "tags." + tag));
  }
  return TableModel(std::move(vocab), std::move(base), std::move(tagged));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace steersmc
