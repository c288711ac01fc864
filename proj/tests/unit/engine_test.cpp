#include <doctest.h>

#include <cmath>

#include "steersmc/engine.hpp"
#include "steersmc/metrics.hpp"
#include "steersmc/model_io.hpp"
#include "steersmc/oracle.hpp"

using namespace steersmc;

namespace {

TableModel toy() {
  return load_table_model(R"({
    "vocab": ["a", "b", "<eos>"],
    "rows": [{"context": [], "dist": [0.6, 0.3, 0.1]},
             {"context": ["a"], "dist": [0.2, 0.3, 0.5]},
             {"context": ["b"], "dist": [0.5, 0.1, 0.4]}],
    "default": [0.3, 0.3, 0.4]
  })");
}

const char* kPlan = R"({"plan_version":1,"max_tokens":4,"steps":[
    {"kind":"masked_sample","mask":{"kind":"char_class","chars":"a","allow_eos":true},"stop":{"token_count":1}},
    {"kind":"sample_until","stop":{"eos":true}}],
    "check":[{"kind":"char_count_exact","count":2}]})";

}  // namespace

TEST_CASE("weight utilities") {
  const std::vector<double> raw{std::log(1.0), std::log(3.0), kNegInf};
  const auto w = normalize_weights(raw);
  CHECK(w[0] == doctest::Approx(0.25));
  CHECK(w[1] == doctest::Approx(0.75));
  CHECK(w[2] == 0.0);
  const std::vector<double> dead{kNegInf, kNegInf};
  CHECK_THROWS_AS(normalize_weights(dead), SteerError);
  const std::vector<double> huge{1000.0, 1000.0};
  CHECK(normalize_weights(huge)[0] == 0.5);

  const std::vector<double> u(4, 0.25);
  CHECK(effective_sample_size(u) == 4.0);
}

TEST_CASE("resampling sets every weight to the log mean") {
  std::vector<Particle> ps(4);
  const double lw[] = {0.0, std::log(2.0), std::log(3.0), std::log(2.0)};
  for (int i = 0; i < 4; ++i) {
    ps[i].log_weight = lw[i];
    ps[i].text = std::string(1, static_cast<char>('a' + i));
  }
  const auto w = normalize_weights(detail::log_weights(ps));
  RandomStream rng(1, kResampleStream, 0);
  const auto out = resample(ps, w, ResampleScheme::multinomial, rng);
  REQUIRE(out.size() == 4);
  for (const auto& p : out) CHECK(p.log_weight == doctest::Approx(std::log(2.0)));
}

TEST_CASE("SMC with threshold 0 reproduces IS exactly") {
  const auto m = toy();
  const auto plan = parse_plan(kPlan);
  InferenceConfig cfg;
  cfg.n_particles = 64;
  cfg.seed = 11;
  cfg.ess_threshold = 0.0;
  cfg.method = Method::smc;
  const auto smc = run_inference(plan, m, cfg);
  cfg.method = Method::importance;
  const auto is = run_inference(plan, m, cfg);
  REQUIRE(smc.candidates.size() == is.candidates.size());
  for (std::size_t i = 0; i < smc.candidates.size(); ++i) {
    CHECK(smc.candidates[i].tokens == is.candidates[i].tokens);
    CHECK(smc.candidates[i].raw_log_weight == is.candidates[i].raw_log_weight);
    CHECK(smc.candidates[i].normalized_weight == is.candidates[i].normalized_weight);
  }
  CHECK(smc.selected_index == is.selected_index);
  CHECK(smc.log_mean_weight == is.log_mean_weight);
  CHECK(smc.diagnostics.resample_events.empty());
}

TEST_CASE("results do not depend on the worker count") {
  const auto m = toy();
  const auto plan = parse_plan(kPlan);
  for (auto method : {Method::smc, Method::importance, Method::rejection}) {
    InferenceConfig cfg;
    cfg.method = method;
    cfg.n_particles = 200;
    cfg.seed = 5;
    cfg.workers = 1;
    const auto a = run_inference(plan, m, cfg);
    cfg.workers = 6;
    const auto b = run_inference(plan, m, cfg);
    REQUIRE(a.candidates.size() == b.candidates.size());
    for (std::size_t i = 0; i < a.candidates.size(); ++i) {
      CHECK(a.candidates[i].tokens == b.candidates[i].tokens);
      CHECK(a.candidates[i].normalized_weight == b.candidates[i].normalized_weight);
    }
    CHECK(a.selected_text == b.selected_text);
    CHECK(a.diagnostics.ess_trace == b.diagnostics.ess_trace);
  }
}

TEST_CASE("SMC resamples when ESS drops and records diagnostics") {
  const auto m = toy();
  const auto plan = parse_plan(kPlan);
  InferenceConfig cfg;
  cfg.n_particles = 32;
  cfg.seed = 2;
  cfg.ess_threshold = 32.0;  // always resample
  cfg.record_trace = true;
  const auto out = run_smc(plan, m, cfg);
  REQUIRE(out.ok());
  CHECK_FALSE(out.diagnostics.resample_events.empty());
  CHECK(out.diagnostics.trace.size() == out.diagnostics.ess_trace.size());
  CHECK(out.selected.has_value());
  CHECK(out.selected_text.size() == 2);
  double total = 0.0;
  for (const auto& c : out.candidates) total += c.normalized_weight;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("rejection gives passers uniform weight") {
  const auto m = toy();
  const auto plan = parse_plan(kPlan);
  InferenceConfig cfg;
  cfg.method = Method::rejection;
  cfg.n_particles = 40;
  cfg.seed = 8;
  const auto out = run_rejection(plan, m, cfg);
  REQUIRE(out.ok());
  double passers = 0;
  for (const auto& c : out.candidates) passers += c.passed_check ? 1 : 0;
  for (const auto& c : out.candidates) CHECK(c.normalized_weight == (c.passed_check ? 1.0 / passers : 0.0));
  CHECK(out.candidates[*out.selected_index].passed_check);
}

TEST_CASE("config validation") {
  InferenceConfig cfg;
  cfg.n_particles = 4;
  cfg.ess_threshold = 5.0;
  CHECK_THROWS_AS(cfg.validate(), SteerError);
  cfg.ess_threshold = -1.0;
  CHECK_THROWS_AS(cfg.validate(), SteerError);
  cfg.ess_threshold = 4.0;
  CHECK_NOTHROW(cfg.validate());
  CHECK(method_from("is") == Method::importance);
  CHECK(method_from("smc") == Method::smc);
  CHECK_FALSE(method_from("beam").has_value());
}

TEST_CASE("enumeration oracle on a hand-computed plan") {
  const auto m = toy();
  const auto plan = parse_plan(kPlan);
  const auto t = brute_force_target(plan, m);
  // First token is masked to {a, <eos>}; only length-2 texts pass.
  // "aa" and "ab" end with the default row's EOS probability 0.4.
  const double aa = 0.6 * 0.2 * 0.4, ab = 0.6 * 0.3 * 0.4;
  CHECK(t.normalizer == doctest::Approx(aa + ab));
  CHECK(t.probs.at(TokenSeq{0, 0, 2}) == doctest::Approx(aa / (aa + ab)));
  CHECK(t.probs.at(TokenSeq{0, 1, 2}) == doctest::Approx(ab / (aa + ab)));
  CHECK(t.probs.size() == 2);
}

TEST_CASE("enumeration refuses large spaces") {
  const UniformModel m(Vocabulary::characters({"a", "b", "c", "d", "e", "f", "g", "h", "i"}));
  const auto plan = parse_plan(R"({"plan_version":1,"max_tokens":9,"steps":[{"kind":"sample_until","stop":{"eos":true}}]})");
  try {
    (void)brute_force_target(plan, m);
    FAIL("expected EnumerationTooLarge");
  } catch (const SteerError& e) {
    CHECK(e.kind() == ErrorKind::EnumerationTooLarge);
  }
}

TEST_CASE("a population where every particle fails the same way reports that error") {
  const auto m = toy();
  const auto plan = parse_plan(R"({"plan_version":1,"max_tokens":4,"steps":[
      {"kind":"masked_sample","mask":{"kind":"char_class","chars":"z","allow_eos":false},"stop":{"eos":true}}]})");
  for (auto method : {Method::smc, Method::importance, Method::rejection}) {
    InferenceConfig cfg;
    cfg.method = method;
    cfg.n_particles = 5;
    const auto out = run_inference(plan, m, cfg);
    REQUIRE(out.error.has_value());
    CHECK(out.error->kind == ErrorKind::MaskEmpty);
    CHECK_FALSE(out.selected.has_value());
  }
}
