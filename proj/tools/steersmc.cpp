#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "steersmc/cli.hpp"

namespace {

using namespace steersmc;

struct Flags {
  std::string tasks, plans, planner_endpoint, planner_template, model, vocab, config, out, trace_dir, run_id;
  std::string method, scheme, tokenizer;
  std::size_t n = 0, max_steps = 0, retries = 0, jobs = 0;
  double ess = 0, timeout = 0, smoothing = 0;
  int order = 0;
  std::uint64_t seed = 0;
  bool timing = false;
};

void add_run_flags(CLI::App* app, Flags& f) {
  app->add_option("--tasks", f.tasks, "task file (JSON lines)")->required()->check(CLI::ExistingFile);
  app->add_option("--plans", f.plans, "directory of <task_type>.plan.json files");
  app->add_option("--planner-endpoint", f.planner_endpoint, "plan generator URL");
  app->add_option("--planner-template", f.planner_template, "prompt template file for the generator");
  app->add_option("--model", f.model, "table:PATH | ngram:PATH | uniform:CHARS | remote:URL")->required();
  app->add_option("--vocab", f.vocab, "vocabulary JSON for remote models");
  app->add_option("--config", f.config, "JSON config; flags override it");
  app->add_option("--method", f.method, "smc | is | rejection");
  app->add_option("-N,--particles", f.n, "number of particles");
  app->add_option("--ess-threshold", f.ess, "resample when ESS falls below this");
  app->add_option("--max-steps", f.max_steps, "step budget per run");
  app->add_option("--timeout", f.timeout, "wall-clock budget per run in seconds");
  app->add_option("--resample", f.scheme, "multinomial | systematic");
  app->add_option("--retries", f.retries, "attempts per task");
  app->add_option("--seed", f.seed, "base seed");
  app->add_option("--jobs", f.jobs, "tasks run concurrently");
  app->add_option("--tokenizer", f.tokenizer, "n-gram tokenizer: character | whitespace");
  app->add_option("--order", f.order, "n-gram order");
  app->add_option("--smoothing", f.smoothing, "n-gram additive smoothing");
  app->add_flag("--timing", f.timing, "record wall time (records stop being byte-stable)");
}

cli::RunOptions resolve(CLI::App* app, const Flags& f) {
  cli::RunOptions opt;
  if (!f.config.empty()) cli::apply_config(opt, nlohmann::json::parse(read_file(f.config)));
  auto given = [&](const char* name) { return app->count(name) > 0; };
  nlohmann::json flags = nlohmann::json::object();
  if (given("--method")) flags["method"] = f.method;
  if (given("--particles")) flags["n_particles"] = f.n;
  if (given("--ess-threshold")) flags["ess_threshold"] = f.ess;
  if (given("--max-steps")) flags["max_steps"] = f.max_steps;
  if (given("--timeout")) flags["timeout_ms"] = static_cast<std::int64_t>(f.timeout * 1000.0);
  if (given("--resample")) flags["resample_scheme"] = f.scheme;
  if (given("--retries")) flags["retries"] = f.retries;
  if (given("--seed")) flags["seed"] = f.seed;
  if (given("--jobs")) flags["jobs"] = f.jobs;
  if (given("--tokenizer")) flags["tokenizer"] = f.tokenizer;
  if (given("--order")) flags["order"] = f.order;
  if (given("--smoothing")) flags["smoothing"] = f.smoothing;
  if (given("--vocab")) flags["vocab"] = f.vocab;
  cli::apply_config(opt, flags);
  opt.tasks_path = f.tasks;
  opt.plans_dir = f.plans;
  opt.planner_endpoint = f.planner_endpoint;
  opt.planner_template_path = f.planner_template;
  opt.model_spec = f.model;
  opt.out_path = f.out;
  opt.trace_dir = f.trace_dir;
  opt.record_timing = f.timing;
  if (opt.plans_dir.empty() == opt.planner_endpoint.empty() && !std::getenv("STEERSMC_PLANNER_ENDPOINT"))
    throw CLI::ValidationError("give exactly one of --plans and --planner-endpoint");
  opt.inference.validate();
  return opt;
}

void write_or_print(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  cli::write_text(path, content);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Monte Carlo steering of token models"};
  app.require_subcommand(1);
  Flags f;

  auto* run = app.add_subcommand("run", "run every task in a task file and write JSONL records");
  add_run_flags(run, f);
  run->add_option("--out", f.out, "record file (default stdout)");
  run->add_option("--trace", f.trace_dir, "directory for per-run trace CSV and HTML");

  auto* eval = app.add_subcommand("eval", "aggregate record files per task type and method");
  std::vector<std::string> records;
  eval->add_option("records", records, "record files")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", f.out, "CSV output path");

  auto* trace = app.add_subcommand("trace", "re-run one task and write its particle trace");
  add_run_flags(trace, f);
  trace->add_option("--run-id", f.run_id, "run id from a record file")->required();
  trace->add_option("--out", f.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto opt = resolve(run, f);
      const auto summary = cli::run_tasks(opt);
      write_or_print(opt.out_path, cli::join_lines(summary.lines));
      return summary.process_error ? 1 : 0;
    }
    if (*eval) {
      std::string all;
      for (const auto& p : records) all += read_file(p) + "\n";
      const auto rows = cli::aggregate(all);
      std::cout << cli::format_table(rows);
      if (!f.out.empty()) cli::write_text(f.out, cli::format_csv(rows));
      return 0;
    }
    if (*trace) {
      const auto opt = resolve(trace, f);
      const auto steps = cli::trace_run(opt, f.run_id, f.out);
      std::cout << "wrote " << steps.size() << " trace steps to " << f.out << "\n";
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SteerError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::SchemaViolation ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
