#pragma once

/**
 * Command-line front end logic: run steering over task files, aggregate run
 * records, and emit per-step particle traces.
 *
 * Record file: one JSON object per line (UTF-8, LF), fields in fixed order.
 * Records carry no timing unless `record_timing` is set, so identical inputs
 * produce byte-identical files.
 */

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "steersmc/engine.hpp"
#include "steersmc/metrics.hpp"
#include "steersmc/model_io.hpp"
#include "steersmc/ngram.hpp"
#include "steersmc/planner.hpp"
#include "steersmc/remote_model.hpp"
#include "steersmc/tasks.hpp"

namespace steersmc::cli {

using ojson = nlohmann::ordered_json;

struct RunOptions {
  std::string tasks_path;
  std::string plans_dir;
  std::string planner_endpoint;
  std::string planner_template_path;
  std::string model_spec;  // table:PATH | ngram:PATH | uniform:CHARS | remote:URL
  std::string vocab_path;  // vocabulary for remote models
  Tokenizer tokenizer = Tokenizer::character;
  int ngram_order = 3;
  double ngram_smoothing = 0.1;
  bool ngram_eos = true;
  InferenceConfig inference;
  std::size_t retries = kDefaultRetries;
  std::size_t jobs = 1;
  std::string trace_dir;
  std::string out_path;
  bool record_timing = false;
};

// ---------------------------------------------------------------------------
// Config file: JSON with InferenceConfig field names plus model options.
// ---------------------------------------------------------------------------

inline void apply_config(RunOptions& opt, const nlohmann::json& j) {
  auto& c = opt.inference;
  for (const auto& [key, v] : j.items()) {
    if (key == "method") {
      auto m = method_from(v.get<std::string>());
      if (!m) throw SteerError(ErrorKind::SchemaViolation, "config.method: unknown method");
      c.method = *m;
    } else if (key == "n_particles") c.n_particles = v.get<std::size_t>();
    else if (key == "ess_threshold") c.ess_threshold = v.get<double>();
    else if (key == "max_steps") c.max_steps = v.get<std::size_t>();
    else if (key == "timeout_ms") c.timeout = std::chrono::milliseconds(v.get<std::int64_t>());
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "resample_scheme") {
      const auto s = v.get<std::string>();
      if (s == "multinomial") c.resample_scheme = ResampleScheme::multinomial;
      else if (s == "systematic") c.resample_scheme = ResampleScheme::systematic;
      else throw SteerError(ErrorKind::SchemaViolation, "config.resample_scheme: unknown scheme");
    } else if (key == "workers") c.workers = v.get<std::size_t>();
    else if (key == "tokenizer") {
      const auto s = v.get<std::string>();
      if (s == "character" || s == "char") opt.tokenizer = Tokenizer::character;
      else if (s == "whitespace" || s == "word") opt.tokenizer = Tokenizer::whitespace;
      else throw SteerError(ErrorKind::SchemaViolation, "config.tokenizer: unknown tokenizer");
    } else if (key == "order") opt.ngram_order = v.get<int>();
    else if (key == "smoothing") opt.ngram_smoothing = v.get<double>();
    else if (key == "eos_at_document_end") opt.ngram_eos = v.get<bool>();
    else if (key == "retries") opt.retries = v.get<std::size_t>();
    else if (key == "jobs") opt.jobs = v.get<std::size_t>();
    else if (key == "vocab") opt.vocab_path = v.get<std::string>();
    else throw SteerError(ErrorKind::SchemaViolation, "config." + key + ": unknown field");
  }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

inline std::shared_ptr<const TokenModel> load_model(const RunOptions& opt) {
  const auto colon = opt.model_spec.find(':');
  if (colon == std::string::npos)
    throw SteerError(ErrorKind::SchemaViolation, "--model must look like kind:path");
  const auto kind = opt.model_spec.substr(0, colon);
  const auto arg = opt.model_spec.substr(colon + 1);
  if (kind == "table") return std::make_shared<TableModel>(load_table_model(read_file(arg)));
  if (kind == "ngram") {
    NgramOptions n;
    n.order = opt.ngram_order;
    n.smoothing = opt.ngram_smoothing;
    n.tokenizer = opt.tokenizer;
    n.eos_at_document_end = opt.ngram_eos;
    return std::make_shared<NgramModel>(train_ngram(read_file(arg), n));
  }
  if (kind == "uniform") return std::make_shared<UniformModel>(Vocabulary::characters(text::split_chars(arg)));
  if (kind == "remote") {
    std::string url = arg;
    if (url.empty()) {
      if (const char* env = std::getenv("STEERSMC_MODEL_ENDPOINT")) url = env;
    }
    if (opt.vocab_path.empty())
      throw SteerError(ErrorKind::SchemaViolation, "remote models need --vocab");
    const auto vj = nlohmann::json::parse(read_file(opt.vocab_path));
    auto toks = vj.at("vocab").get<std::vector<std::string>>();
    const auto eos = static_cast<TokenId>(toks.size() - 1);
    return std::make_shared<RemoteModel>(url, Vocabulary(std::move(toks), eos, vj.value("joiner", std::string())));
  }
  throw SteerError(ErrorKind::SchemaViolation, "unknown model kind '" + kind + "'");
}

inline std::unique_ptr<ProgramSource> make_source(const RunOptions& opt) {
  if (!opt.plans_dir.empty())
    return std::make_unique<FixtureLibrary>(FixtureLibrary::from_directory(opt.plans_dir));
  std::string endpoint = opt.planner_endpoint;
  if (endpoint.empty())
    if (const char* env = std::getenv("STEERSMC_PLANNER_ENDPOINT")) endpoint = env;
  if (endpoint.empty())
    throw SteerError(ErrorKind::SchemaViolation, "need --plans or --planner-endpoint");
  std::string tmpl(kDefaultPlannerTemplate);
  if (!opt.planner_template_path.empty()) tmpl = read_file(opt.planner_template_path);
  return std::make_unique<RemoteGenerator>(endpoint, tmpl);
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

inline std::string run_id(std::size_t index, const TaskSpec& task, Method method, std::uint64_t seed) {
  return std::to_string(index) + "-" + task.task_type + "-" + std::string(to_string(method)) + "-" +
         std::to_string(seed);
}

inline ojson finite_or_null(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

struct TaskRun {
  ojson record;
  std::vector<TraceStep> trace;
  bool process_error = false;
};

inline TaskRun run_one(std::size_t index, const TaskSpec& task, ProgramSource& source, const TokenModel& model,
                       const RunOptions& opt, bool keep_trace) {
  InferenceConfig cfg = opt.inference;
  cfg.seed = mix_seed(opt.inference.seed, index);
  cfg.record_trace = keep_trace;

  TaskRun run;
  ojson& r = run.record;
  r["run_id"] = run_id(index, task, cfg.method, opt.inference.seed);
  r["task_index"] = index;
  r["task_type"] = task.task_type;
  ojson params = ojson::array();
  for (const auto& c : task.constraints) params.push_back(to_json(c));
  r["task_parameters"] = params;
  r["method"] = std::string(to_string(cfg.method));
  r["n_particles"] = cfg.n_particles;
  r["seed"] = opt.inference.seed;

  try {
    const LoopResult res = steer(task, source, model, cfg, opt.retries);
    const auto& out = res.final;
    const bool has_answer = out.selected.has_value();
    const bool passed = has_answer && verify(task.constraints, out.selected_text).passed;

    std::vector<PassSample> samples;
    if (!out.error) {
      for (const auto& c : out.candidates) {
        PassSample s;
        if (cfg.method == Method::rejection) {
          if (c.status == ParticleStatus::done) s.log_weight = 0.0;
        } else if (std::isfinite(c.raw_log_weight)) {
          s.log_weight = c.raw_log_weight;
        }
        s.passed = verify(task.constraints, c.text).passed;
        samples.push_back(s);
      }
    }
    const double wp1 = samples.empty() ? 0.0 : weighted_pass_at_1(samples);

    r["selected_text"] = has_answer ? ojson(out.selected_text) : ojson(nullptr);
    r["passed"] = passed;
    r["weighted_pass_at_1"] = wp1;
    r["coherency_proxy"] = has_answer ? finite_or_null(coherency_proxy(*out.selected, model)) : ojson(nullptr);
    r["retries_used"] = res.retries_used;
    r["attempts"] = res.attempts.size();
    r["error"] = out.error ? ojson(std::string(to_string(out.error->kind))) : ojson(nullptr);
    r["error_detail"] = out.error ? ojson(out.error->detail) : ojson(nullptr);
    r["wall_time_ms"] = opt.record_timing
                            ? ojson(std::chrono::duration<double, std::milli>(out.diagnostics.wall_time).count())
                            : ojson(nullptr);
    const auto& ess = out.diagnostics.ess_trace;
    r["ess_min"] = ess.empty() ? ojson(nullptr) : ojson(*std::min_element(ess.begin(), ess.end()));
    r["ess_final"] = ess.empty() ? ojson(nullptr) : ojson(ess.back());
    r["resample_count"] = out.diagnostics.resample_events.size();
    r["steps_executed"] = out.diagnostics.steps_executed;
    run.trace = out.diagnostics.trace;
  } catch (const std::exception& e) {
    run.process_error = true;
    r["selected_text"] = nullptr;
    r["passed"] = false;
    r["weighted_pass_at_1"] = 0.0;
    r["coherency_proxy"] = nullptr;
    r["retries_used"] = 0;
    r["attempts"] = 0;
    if (const auto* se = dynamic_cast<const SteerError*>(&e)) r["error"] = std::string(to_string(se->kind()));
    else r["error"] = "ProcessError";
    r["error_detail"] = e.what();
    r["wall_time_ms"] = nullptr;
    r["ess_min"] = nullptr;
    r["ess_final"] = nullptr;
    r["resample_count"] = 0;
    r["steps_executed"] = 0;
  }
  return run;
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

inline std::string csv_escape(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  return out + "\"";
}

inline std::string trace_csv(const std::vector<TraceStep>& trace) {
  std::ostringstream os;
  os << "step,particle,normalized_weight,ess,resampled,text\n";
  os << std::setprecision(17);
  for (const auto& st : trace)
    for (std::size_t i = 0; i < st.normalized_weights.size(); ++i)
      os << st.step << ',' << i << ',' << st.normalized_weights[i] << ',' << st.ess << ','
         << (st.resampled ? 1 : 0) << ',' << csv_escape(st.texts[i]) << '\n';
  return os.str();
}

inline std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Static HTML page with one SVG polyline per particle slot.
inline std::string trace_html(const std::string& id, const std::vector<TraceStep>& trace) {
  constexpr double W = 800, H = 360, pad = 40;
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>trace " << html_escape(id)
     << "</title></head><body>\n<h1>Particle weights: " << html_escape(id) << "</h1>\n";
  const std::size_t steps = trace.size();
  const std::size_t n = steps ? trace.front().normalized_weights.size() : 0;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\" stroke=\"#ccc\"/>\n";
  auto x_at = [&](std::size_t s) { return pad + (steps > 1 ? (W - 2 * pad) * s / (steps - 1.0) : 0.0); };
  auto y_at = [&](double w) { return H - pad - (H - 2 * pad) * w; };
  for (std::size_t i = 0; i < n; ++i) {
    os << "<polyline fill=\"none\" stroke=\"hsl(" << (360.0 * i / std::max<std::size_t>(n, 1))
       << ",60%,45%)\" stroke-width=\"1.5\" points=\"";
    for (std::size_t s = 0; s < steps; ++s) os << x_at(s) << ',' << y_at(trace[s].normalized_weights[i]) << ' ';
    os << "\"/>\n";
  }
  for (std::size_t s = 0; s < steps; ++s)
    if (trace[s].resampled)
      os << "<line x1=\"" << x_at(s) << "\" x2=\"" << x_at(s) << "\" y1=\"" << pad << "\" y2=\"" << H - pad
         << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  os << "<text x=\"" << pad << "\" y=\"" << H - 10 << "\" font-size=\"12\">step</text>\n";
  os << "<text x=\"4\" y=\"" << pad - 10 << "\" font-size=\"12\">normalized weight</text>\n</svg>\n";
  os << "<table border=\"1\" cellpadding=\"3\"><tr><th>step</th><th>ESS</th><th>resampled</th><th>best particle</th></tr>\n";
  for (const auto& st : trace) {
    const auto best = std::max_element(st.normalized_weights.begin(), st.normalized_weights.end()) -
                      st.normalized_weights.begin();
    os << "<tr><td>" << st.step << "</td><td>" << st.ess << "</td><td>" << (st.resampled ? "yes" : "")
       << "</td><td>" << html_escape(st.texts[static_cast<std::size_t>(best)]) << "</td></tr>\n";
  }
  os << "</table>\n</body></html>\n";
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

inline void write_trace(const std::filesystem::path& dir, const std::string& id, const std::vector<TraceStep>& trace) {
  write_text(dir / (id + ".trace.csv"), trace_csv(trace));
  write_text(dir / (id + ".trace.html"), trace_html(id, trace));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct RunSummary {
  std::vector<std::string> lines;
  bool process_error = false;
};

inline RunSummary run_tasks(const RunOptions& opt) {
  const auto tasks = parse_task_file(read_file(opt.tasks_path));
  const auto model = load_model(opt);
  auto source = make_source(opt);
  const bool remote_source = source->kind() == "remote_generator";

  std::vector<TaskRun> runs(tasks.size());
  const bool keep = !opt.trace_dir.empty();
  auto one = [&](std::size_t i) {
    if (remote_source) {
      // One client per task keeps concurrent fetches independent.
      auto own = make_source(opt);
      runs[i] = run_one(i, tasks[i], *own, *model, opt, keep);
    } else {
      runs[i] = run_one(i, tasks[i], *source, *model, opt, keep);
    }
  };
  steersmc::detail::parallel_for(tasks.size(), std::max<std::size_t>(opt.jobs, 1), one);

  RunSummary summary;
  for (auto& r : runs) {
    summary.lines.push_back(r.record.dump());
    summary.process_error = summary.process_error || r.process_error;
    if (keep && !r.trace.empty()) write_trace(opt.trace_dir, r.record["run_id"].get<std::string>(), r.trace);
  }
  return summary;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

/// Re-executes the task named by `id` (its leading index) and writes its trace.
inline std::vector<TraceStep> trace_run(const RunOptions& opt, const std::string& id,
                                        const std::filesystem::path& out_dir) {
  const auto dash = id.find('-');
  std::size_t index = 0;
  try {
    index = std::stoul(id.substr(0, dash));
  } catch (const std::exception&) {
    throw SteerError(ErrorKind::SchemaViolation, "run id '" + id + "' does not start with a task index");
  }
  const auto tasks = parse_task_file(read_file(opt.tasks_path));
  if (index >= tasks.size()) throw SteerError(ErrorKind::SchemaViolation, "run id names a missing task");
  const auto model = load_model(opt);
  auto source = make_source(opt);
  auto run = run_one(index, tasks[index], *source, *model, opt, true);
  write_trace(out_dir, run.record["run_id"].get<std::string>(), run.trace);
  return run.trace;
}

struct AggregateRow {
  std::string task_type;
  std::string method;
  std::size_t runs = 0;
  double mean_wp1 = 0.0;
  std::optional<double> mean_coherency;
  double error_rate = 0.0;
  double pass_rate = 0.0;
};

inline std::vector<AggregateRow> aggregate(std::string_view records) {
  struct Acc {
    std::size_t n = 0, errors = 0, passes = 0, coh_n = 0;
    double wp1 = 0.0, coh = 0.0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  std::istringstream in{std::string(records)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SteerError(ErrorKind::ParseError, "record line " + std::to_string(lineno) + ": " + e.what());
    }
    auto& a = acc[{j.at("task_type").get<std::string>(), j.at("method").get<std::string>()}];
    ++a.n;
    a.wp1 += j.at("weighted_pass_at_1").get<double>();
    if (!j.at("error").is_null()) ++a.errors;
    if (j.at("passed").get<bool>()) ++a.passes;
    if (!j.at("coherency_proxy").is_null()) {
      ++a.coh_n;
      a.coh += j["coherency_proxy"].get<double>();
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, a] : acc) {
    AggregateRow r;
    r.task_type = key.first;
    r.method = key.second;
    r.runs = a.n;
    r.mean_wp1 = a.wp1 / static_cast<double>(a.n);
    if (a.coh_n) r.mean_coherency = a.coh / static_cast<double>(a.coh_n);
    r.error_rate = static_cast<double>(a.errors) / static_cast<double>(a.n);
    r.pass_rate = static_cast<double>(a.passes) / static_cast<double>(a.n);
    rows.push_back(r);
  }
  return rows;
}

inline std::string format_table(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "task_type" << std::setw(12) << "method" << std::right << std::setw(6)
     << "runs" << std::setw(12) << "wPass@1" << std::setw(12) << "pass" << std::setw(12) << "coherency"
     << std::setw(12) << "errors" << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    os << std::left << std::setw(12) << r.task_type << std::setw(12) << r.method << std::right << std::setw(6)
       << r.runs << std::setw(12) << r.mean_wp1 << std::setw(12) << r.pass_rate << std::setw(12);
    if (r.mean_coherency) os << *r.mean_coherency;
    else os << "-";
    os << std::setw(12) << r.error_rate << '\n';
  }
  return os.str();
}

inline std::string format_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "task_type,method,runs,mean_weighted_pass_at_1,pass_rate,mean_coherency_proxy,error_rate\n";
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.task_type << ',' << r.method << ',' << r.runs << ',' << r.mean_wp1 << ',' << r.pass_rate << ',';
    if (r.mean_coherency) os << *r.mean_coherency;
    os << ',' << r.error_rate << '\n';
  }
  return os.str();
}

}  // namespace steersmc::cli
