#pragma once

/**
 * The retrying outer loop: fetch a plan for a task, run it, and on a runtime
 * error ask the source again with feedback describing the failure.
 *
 * max_retries bounds the total number of attempts (R = 3 gives at most three
 * runs). Feedback is attached from the second attempt on. A run that returns
 * an answer ends the loop even if that answer later fails verification.
 */

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "steersmc/engine.hpp"
#include "steersmc/error.hpp"
#include "steersmc/model_io.hpp"
#include "steersmc/plan.hpp"
#include "steersmc/steering.hpp"
#include "steersmc/tasks.hpp"

namespace steersmc {

inline constexpr std::size_t kDefaultRetries = 3;

class ProgramSource {
 public:
  virtual ~ProgramSource() = default;
  virtual std::string_view kind() const = 0;
  /// Returns a plan document for `task`; feedback describes the previous failure.
  virtual std::string fetch_plan(const TaskSpec& task, const std::optional<std::string>& feedback) = 0;
};

/// Plans keyed by task type, usually loaded from `<dir>/<task_type>.plan.json`.
class FixtureLibrary final : public ProgramSource {
 public:
  explicit FixtureLibrary(std::map<std::string, std::string, std::less<>> plans) : plans_(std::move(plans)) {
    for (const auto& [type, doc] : plans_) {
      try {
        (void)parse_plan(doc);
      } catch (const SteerError& e) {
        throw SteerError(e.kind(), "fixture plan for " + type + ": " + e.detail());
      }
    }
  }

  static FixtureLibrary from_directory(const std::filesystem::path& dir) {
    std::map<std::string, std::string, std::less<>> plans;
    if (!std::filesystem::is_directory(dir))
      throw std::runtime_error("plan directory " + dir.string() + " does not exist");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      constexpr std::string_view suffix = ".plan.json";
      if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      plans.emplace(name.substr(0, name.size() - suffix.size()), read_file(entry.path().string()));
    }
    return FixtureLibrary(std::move(plans));
  }

  std::string_view kind() const override { return "fixture_library"; }

  std::string fetch_plan(const TaskSpec& task, const std::optional<std::string>&) override {
    auto it = plans_.find(task.task_type);
    if (it == plans_.end())
      throw SteerError(ErrorKind::SchemaViolation, "no fixture plan for task type " + task.task_type);
    return it->second;
  }

  bool has(std::string_view task_type) const { return plans_.find(task_type) != plans_.end(); }

 private:
  std::map<std::string, std::string, std::less<>> plans_;
};

inline constexpr std::string_view kDefaultPlannerTemplate =
    "Write a steering plan (plan_version 1) for the following task.\n\n{task}\n\n{prior_error}";

/**
 * Plans from an HTTP generator:
 *   POST <endpoint>/v1/generate_plan  {"task": string, "feedback": string|null, "plan_version": 1}
 *   -> {"plan": <plan document>}
 * "task" is the prompt template with {task} and {prior_error} filled in.
 */
class RemoteGenerator final : public ProgramSource {
 public:
  static constexpr const char* kPath = "/v1/generate_plan";

  RemoteGenerator(std::string endpoint, std::string prompt_template = std::string(kDefaultPlannerTemplate),
                  int timeout_seconds = 60)
      : endpoint_(std::move(endpoint)), template_(std::move(prompt_template)), timeout_s_(timeout_seconds) {}

  std::string_view kind() const override { return "remote_generator"; }

  std::string render_prompt(const TaskSpec& task, const std::optional<std::string>& feedback) const {
    std::string out;
    std::string_view t = template_;
    while (!t.empty()) {
      if (t.starts_with("{task}")) {
        out += task.prompt_text;
        t.remove_prefix(6);
      } else if (t.starts_with("{prior_error}")) {
        out += feedback.value_or("");
        t.remove_prefix(13);
      } else {
        out += t.front();
        t.remove_prefix(1);
      }
    }
    return out;
  }

  std::string fetch_plan(const TaskSpec& task, const std::optional<std::string>& feedback) override {
    nlohmann::json body{{"task", render_prompt(task, feedback)},
                        {"feedback", feedback ? nlohmann::json(*feedback) : nlohmann::json(nullptr)},
                        {"plan_version", kPlanVersion}};
    httplib::Client client(endpoint_);
    client.set_connection_timeout(timeout_s_, 0);
    client.set_read_timeout(timeout_s_, 0);
    auto res = client.Post(kPath, body.dump(), "application/json");
    if (!res)
      throw SteerError(ErrorKind::RemoteUnavailable, endpoint_ + ": " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw SteerError(ErrorKind::RemoteUnavailable,
                       endpoint_ + " answered HTTP " + std::to_string(res->status));
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw SteerError(ErrorKind::ParseError, std::string("generator reply: ") + e.what());
    }
    if (!reply.is_object() || !reply.contains("plan"))
      throw SteerError(ErrorKind::SchemaViolation, "generator reply lacks 'plan'");
    const auto& plan = reply["plan"];
    return plan.is_string() ? plan.get<std::string>() : plan.dump();
  }

 private:
  std::string endpoint_;
  std::string template_;
  int timeout_s_;
};

struct AttemptRecord {
  std::string plan_document;
  std::optional<std::string> feedback;  // what was sent to the source
  std::optional<ErrorInfo> error;
  std::size_t steps_executed = 0;
};

struct LoopResult {
  InferenceOutcome final;
  std::vector<AttemptRecord> attempts;
  std::size_t retries_used = 0;
  bool exhausted = false;  // every attempt ended in a runtime error
};

/// Byte-stable description of a failed attempt for the next fetch.
inline std::string format_feedback(const ErrorInfo& error, std::string_view attempt_plan) {
  std::string out = "The previous inference program failed with error ";
  out += to_string(error.kind);
  out += ".\nDetail: " + error.detail + "\n";
  out += "Failing clause index: " + (error.clause ? std::to_string(*error.clause) : std::string("unknown")) + "\n";
  out += "Step index: " + (error.step ? std::to_string(*error.step) : std::string("unknown")) + "\n";
  out += "Previous program:\n";
  out += attempt_plan;
  if (!attempt_plan.empty() && attempt_plan.back() != '\n') out += '\n';
  return out;
}

inline LoopResult steer(const TaskSpec& task, ProgramSource& source, const TokenModel& model,
                        const InferenceConfig& config, std::size_t max_retries = kDefaultRetries) {
  if (max_retries < 1) throw SteerError(ErrorKind::SchemaViolation, "max_retries must be >= 1");
  LoopResult result;
  std::optional<std::string> feedback;
  for (std::size_t attempt = 0; attempt < max_retries; ++attempt) {
    AttemptRecord rec;
    rec.feedback = feedback;
    InferenceConfig cfg = config;
    if (attempt > 0) cfg.seed = mix_seed(config.seed, attempt);

    InferenceOutcome outcome;
    try {
      rec.plan_document = source.fetch_plan(task, feedback);
      const SteeringPlan plan = parse_plan(rec.plan_document);
      validate_plan(plan, model.vocabulary());
      outcome = run_inference(plan, model, cfg);
    } catch (const SteerError& e) {
      if (!is_runtime_error(e.kind())) throw;
      outcome = InferenceOutcome{};
      outcome.error = ErrorInfo::from(e);
    }
    rec.error = outcome.error;
    rec.steps_executed = outcome.diagnostics.steps_executed;
    result.attempts.push_back(std::move(rec));
    result.retries_used = attempt;
    result.final = std::move(outcome);
    if (!result.final.error) return result;
    feedback = format_feedback(*result.final.error, result.attempts.back().plan_document);
  }
  result.exhausted = true;
  return result;
}

}  // namespace steersmc
