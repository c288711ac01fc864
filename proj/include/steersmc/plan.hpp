#pragma once

/**
 * Steering plans: a bounded, declarative step language.
 *
 * Plan document (JSON, plan_version 1):
 *
 *   {
 *     "plan_version": 1,
 *     "proposal_tag": "proposal",          // optional, default "proposal"
 *     "prior_tag": "prior",                // optional, default "prior"
 *     "max_tokens": 32,
 *     "vars": {"target": 82},              // optional integer/string constants
 *     "steps": [ <clause>, ... ],
 *     "check": [ <constraint>, ... ]       // constraints.hpp schema
 *   }
 *
 * Clauses:
 *   {"kind": "sample_until",  "stop": <predicate>, "max_tokens": n?, "use_prior": bool?}
 *   {"kind": "masked_sample", "mask": <mask>, "stop": <predicate>, "max_tokens": n?,
 *                             "use_prior": bool?}
 *   {"kind": "force_string",  "text": "Glasgow"}
 *   {"kind": "hint",          "template": "remaining chars: {target - chars}"}
 *   {"kind": "loop",          "body": [<clause>...], "until": <predicate>,
 *                             "max_iterations": n?}
 *
 * Predicates (exactly one key):
 *   {"token_count": n}   n tokens appended since the clause (or loop) began
 *   {"substring": "s"}   text appended since the clause began contains s
 *   {"eos": true}        EOS was emitted
 *   {"word_count": n}    the whole text holds n completed words (a word is
 *                        completed once whitespace follows it)
 *
 * Masks (exactly one "kind"):
 *   {"kind": "max_remaining_chars", "total": n, "exact": bool?}
 *   {"kind": "char_class", "chars": "abc", "classes": ["alpha", "space", ...],
 *                          "allow_eos": bool?}
 *   {"kind": "allowed_words", "words": [...]}
 *   {"kind": "token_ids", "ids": [...]}
 */

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "steersmc/constraints.hpp"
#include "steersmc/error.hpp"
#include "steersmc/vocabulary.hpp"

namespace steersmc {

inline constexpr int kPlanVersion = 1;
inline constexpr std::int64_t kMaxLoopBound = 10'000;
inline constexpr std::int64_t kDefaultLoopBound = 1'000;

struct Predicate {
  enum class Kind { token_count, substring, eos, word_count };
  Kind kind = Kind::eos;
  std::int64_t count = 0;
  std::string text;
};

struct MaskSpec {
  enum class Kind { max_remaining_chars, char_class, allowed_words, token_ids };
  Kind kind = Kind::token_ids;
  std::int64_t total = 0;  // max_remaining_chars
  bool exact = false;      // max_remaining_chars: EOS only once the total is reached
  std::string chars;       // char_class
  std::vector<std::string> classes;
  bool allow_eos = true;  // char_class
  std::vector<std::string> words;  // allowed_words
  std::vector<TokenId> ids;        // token_ids
};

enum class ClauseKind { sample_until, masked_sample, force_string, hint, loop };

struct Clause {
  ClauseKind kind = ClauseKind::sample_until;
  Predicate stop;                // sample_until, masked_sample
  std::optional<MaskSpec> mask;  // masked_sample
  bool use_prior = false;
  std::int64_t bound = 0;  // tokens for sampling clauses, iterations for loops
  std::string text;        // force_string text or hint template
  std::vector<Clause> body;  // loop
  Predicate until;           // loop
};

using VarMap = std::map<std::string, std::string, std::less<>>;

struct SteeringPlan {
  std::string proposal_tag{"proposal"};
  std::string prior_tag{"prior"};
  std::int64_t max_tokens = 0;
  VarMap vars;
  std::vector<Clause> steps;
  std::vector<ConstraintSpec> check;
};

inline constexpr std::string_view to_string(ClauseKind k) noexcept {
  switch (k) {
    case ClauseKind::sample_until: return "sample_until";
    case ClauseKind::masked_sample: return "masked_sample";
    case ClauseKind::force_string: return "force_string";
    case ClauseKind::hint: return "hint";
    case ClauseKind::loop: return "loop";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Hint templates
// ---------------------------------------------------------------------------

/// Names a hint may use without declaring them in `vars`.
inline const std::set<std::string, std::less<>>& builtin_hint_vars() {
  static const std::set<std::string, std::less<>> names{"chars", "words", "tokens", "text"};
  return names;
}

namespace detail {

struct TemplateTerm {
  std::string lhs;
  char op = 0;  // 0, '+', '-'
  std::string rhs;
};

inline bool is_int_literal(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

/// Parses "{a}", "{a - b}", "{a + 3}" bodies.
inline TemplateTerm parse_term(std::string_view body) {
  TemplateTerm t;
  auto trimmed = text::trim(body);
  for (std::size_t i = 1; i + 1 < trimmed.size(); ++i) {
    if ((trimmed[i] == '+' || trimmed[i] == '-') && text::is_space(trimmed[i - 1])) {
      t.lhs = std::string(text::trim(trimmed.substr(0, i)));
      t.op = trimmed[i];
      t.rhs = std::string(text::trim(trimmed.substr(i + 1)));
      return t;
    }
  }
  t.lhs = std::string(trimmed);
  return t;
}

template <typename Fn>
void for_each_placeholder(std::string_view tmpl, Fn&& fn) {
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find('{', i);
    if (open == std::string_view::npos) return;
    const auto close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) return;
    fn(open, close, tmpl.substr(open + 1, close - open - 1));
    i = close + 1;
  }
}

}  // namespace detail

/// Variable names referenced by a template (literals excluded).
inline std::set<std::string> template_variables(std::string_view tmpl) {
  std::set<std::string> names;
  detail::for_each_placeholder(tmpl, [&](std::size_t, std::size_t, std::string_view body) {
    const auto t = detail::parse_term(body);
    for (const auto& n : {t.lhs, t.rhs})
      if (!n.empty() && !detail::is_int_literal(n)) names.insert(n);
  });
  return names;
}

/// Substitutes {name} / {a - b} / {a + b}; throws UnboundVariable.
inline std::string render_template(std::string_view tmpl, const VarMap& bindings) {
  std::string out;
  std::size_t last = 0;
  auto lookup = [&](const std::string& name) -> std::string {
    if (detail::is_int_literal(name)) return name;
    auto it = bindings.find(name);
    if (it == bindings.end())
      throw SteerError(ErrorKind::UnboundVariable, "hint variable '" + name + "' is not bound");
    return it->second;
  };
  detail::for_each_placeholder(tmpl, [&](std::size_t open, std::size_t close, std::string_view body) {
    out.append(tmpl.substr(last, open - last));
    const auto t = detail::parse_term(body);
    const auto a = lookup(t.lhs);
    if (t.op == 0) {
      out += a;
    } else {
      const auto b = lookup(t.rhs);
      if (!detail::is_int_literal(a) || !detail::is_int_literal(b))
        throw SteerError(ErrorKind::UnboundVariable,
                         "arithmetic on non-integer hint variables in '{" + std::string(body) + "}'");
      const auto x = std::stoll(a), y = std::stoll(b);
      out += std::to_string(t.op == '+' ? x + y : x - y);
    }
    last = close + 1;
  });
  out.append(tmpl.substr(last));
  return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

class PlanParser {
 public:
  SteeringPlan parse(const nlohmann::json& j) {
    require_object(j, "plan");
    allow_fields(j, "plan",
                 {"plan_version", "proposal_tag", "prior_tag", "max_tokens", "vars", "steps", "check"});
    if (!j.contains("plan_version") || !j["plan_version"].is_number_integer() ||
        j["plan_version"].get<int>() != kPlanVersion)
      bad("plan.plan_version", "must be " + std::to_string(kPlanVersion));

    SteeringPlan plan;
    if (j.contains("proposal_tag")) plan.proposal_tag = string_field(j, "proposal_tag", "plan");
    if (j.contains("prior_tag")) plan.prior_tag = string_field(j, "prior_tag", "plan");
    plan.max_tokens = positive_int(j, "max_tokens", "plan", true, 0);
    max_tokens_ = plan.max_tokens;

    if (j.contains("vars")) {
      require_object(j["vars"], "plan.vars");
      for (const auto& [name, v] : j["vars"].items()) {
        if (builtin_hint_vars().count(name))
          bad("plan.vars." + name, "shadows a built-in variable");
        if (v.is_number_integer()) plan.vars[name] = std::to_string(v.get<std::int64_t>());
        else if (v.is_string()) plan.vars[name] = v.get<std::string>();
        else bad("plan.vars." + name, "must be an integer or string");
      }
    }
    vars_ = &plan.vars;

    if (!j.contains("steps") || !j["steps"].is_array() || j["steps"].empty())
      bad("plan.steps", "must be a non-empty list");
    plan.steps = clauses(j["steps"], "plan.steps");
    plan.check = j.contains("check") ? constraints_from_json(j["check"], "plan.check")
                                     : std::vector<ConstraintSpec>{};
    return plan;
  }

 private:
  [[noreturn]] static void bad(const std::string& field, const std::string& why) {
    throw SteerError(ErrorKind::SchemaViolation, field + ": " + why);
  }

  static void require_object(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) bad(where, "expected an object");
  }

  static void allow_fields(const nlohmann::json& j, const std::string& where,
                           std::initializer_list<std::string_view> names) {
    for (const auto& [key, _] : j.items()) {
      bool ok = false;
      for (auto n : names) ok = ok || n == key;
      if (!ok) bad(where + "." + key, "unknown field");
    }
  }

  static std::string string_field(const nlohmann::json& j, const char* name, const std::string& where) {
    if (!j.contains(name) || !j[name].is_string()) bad(where + "." + name, "expected a string");
    return j[name].get<std::string>();
  }

  static std::int64_t positive_int(const nlohmann::json& j, const char* name, const std::string& where,
                                   bool required, std::int64_t fallback) {
    if (!j.contains(name)) {
      if (required) bad(where + "." + name, "missing");
      return fallback;
    }
    if (!j[name].is_number_integer() || j[name].get<std::int64_t>() < 1)
      bad(where + "." + name, "must be a positive integer");
    return j[name].get<std::int64_t>();
  }

  Predicate predicate(const nlohmann::json& j, const std::string& where) {
    require_object(j, where);
    if (j.size() != 1) bad(where, "needs exactly one of token_count, substring, eos, word_count");
    Predicate p;
    if (j.contains("token_count")) {
      p.kind = Predicate::Kind::token_count;
      p.count = positive_int(j, "token_count", where, true, 0);
    } else if (j.contains("word_count")) {
      p.kind = Predicate::Kind::word_count;
      p.count = positive_int(j, "word_count", where, true, 0);
    } else if (j.contains("substring")) {
      p.kind = Predicate::Kind::substring;
      p.text = string_field(j, "substring", where);
      if (p.text.empty()) bad(where + ".substring", "must be non-empty");
    } else if (j.contains("eos")) {
      if (!j["eos"].is_boolean() || !j["eos"].get<bool>()) bad(where + ".eos", "must be true");
      p.kind = Predicate::Kind::eos;
    } else {
      bad(where + "." + j.begin().key(), "unknown predicate");
    }
    return p;
  }

  MaskSpec mask(const nlohmann::json& j, const std::string& where) {
    require_object(j, where);
    MaskSpec m;
    const auto kind = string_field(j, "kind", where);
    try {
      if (kind == "max_remaining_chars") {
        allow_fields(j, where, {"kind", "total", "exact"});
        m.kind = MaskSpec::Kind::max_remaining_chars;
        if (!j.contains("total") || !j["total"].is_number_integer() || j["total"].get<std::int64_t>() < 0)
          bad(where + ".total", "must be a non-negative integer");
        m.total = j["total"].get<std::int64_t>();
        m.exact = j.value("exact", false);
      } else if (kind == "char_class") {
        allow_fields(j, where, {"kind", "chars", "classes", "allow_eos"});
        m.kind = MaskSpec::Kind::char_class;
        m.chars = j.value("chars", std::string());
        m.classes = j.value("classes", std::vector<std::string>{});
        for (const auto& c : m.classes)
          if (c != "alpha" && c != "digit" && c != "space" && c != "punct" && c != "upper" &&
              c != "lower")
            bad(where + ".classes", "unknown class '" + c + "'");
        m.allow_eos = j.value("allow_eos", true);
        // An empty class set is only useful as an EOS-only mask.
        if (m.chars.empty() && m.classes.empty() && !m.allow_eos)
          bad(where, "char_class allows nothing");
      } else if (kind == "allowed_words") {
        allow_fields(j, where, {"kind", "words"});
        m.kind = MaskSpec::Kind::allowed_words;
        m.words = j.at("words").get<std::vector<std::string>>();
        if (m.words.empty()) bad(where + ".words", "must be non-empty");
      } else if (kind == "token_ids") {
        allow_fields(j, where, {"kind", "ids"});
        m.kind = MaskSpec::Kind::token_ids;
        m.ids = j.at("ids").get<std::vector<TokenId>>();
      } else {
        bad(where + ".kind", "unknown mask '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      bad(where, e.what());
    }
    return m;
  }

  std::vector<Clause> clauses(const nlohmann::json& arr, const std::string& where) {
    std::vector<Clause> out;
    for (std::size_t i = 0; i < arr.size(); ++i)
      out.push_back(clause(arr[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

  Clause clause(const nlohmann::json& j, const std::string& where) {
    require_object(j, where);
    const auto kind = string_field(j, "kind", where);
    Clause c;
    if (kind == "sample_until" || kind == "masked_sample") {
      const bool masked = kind == "masked_sample";
      if (masked) allow_fields(j, where, {"kind", "mask", "stop", "max_tokens", "use_prior"});
      else allow_fields(j, where, {"kind", "stop", "max_tokens", "use_prior"});
      c.kind = masked ? ClauseKind::masked_sample : ClauseKind::sample_until;
      if (!j.contains("stop")) bad(where + ".stop", "missing");
      c.stop = predicate(j["stop"], where + ".stop");
      if (masked) {
        if (!j.contains("mask")) bad(where + ".mask", "missing");
        c.mask = mask(j["mask"], where + ".mask");
      }
      c.bound = positive_int(j, "max_tokens", where, false, max_tokens_);
      if (c.bound > max_tokens_) bad(where + ".max_tokens", "exceeds the plan's max_tokens");
      if (j.contains("use_prior")) {
        if (!j["use_prior"].is_boolean()) bad(where + ".use_prior", "expected a boolean");
        c.use_prior = j["use_prior"].get<bool>();
      }
    } else if (kind == "force_string") {
      allow_fields(j, where, {"kind", "text"});
      c.kind = ClauseKind::force_string;
      c.text = string_field(j, "text", where);
      if (c.text.empty()) bad(where + ".text", "must be non-empty");
    } else if (kind == "hint") {
      allow_fields(j, where, {"kind", "template"});
      c.kind = ClauseKind::hint;
      c.text = string_field(j, "template", where);
      for (const auto& name : template_variables(c.text))
        if (!builtin_hint_vars().count(name) && !vars_->count(name))
          throw SteerError(ErrorKind::UnboundVariable,
                           where + ".template: references undeclared variable '" + name + "'");
    } else if (kind == "loop") {
      allow_fields(j, where, {"kind", "body", "until", "max_iterations"});
      c.kind = ClauseKind::loop;
      if (!j.contains("body") || !j["body"].is_array() || j["body"].empty())
        bad(where + ".body", "must be a non-empty list");
      c.body = clauses(j["body"], where + ".body");
      if (!j.contains("until")) bad(where + ".until", "missing");
      c.until = predicate(j["until"], where + ".until");
      c.bound = positive_int(j, "max_iterations", where, false, kDefaultLoopBound);
      if (c.bound > kMaxLoopBound)
        bad(where + ".max_iterations", "must be at most " + std::to_string(kMaxLoopBound));
    } else {
      bad(where + ".kind", "unknown clause '" + kind + "'");
    }
    return c;
  }

  std::int64_t max_tokens_ = 0;
  const VarMap* vars_ = nullptr;
};

}  // namespace detail

inline SteeringPlan parse_plan_json(const nlohmann::json& doc) { return detail::PlanParser{}.parse(doc); }

inline SteeringPlan parse_plan(std::string_view source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw SteerError(ErrorKind::ParseError,
                     "plan document at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return parse_plan_json(j);
}

}  // namespace steersmc
