#include <doctest.h>

#include <cmath>

#include "steersmc/model_io.hpp"
#include "steersmc/ngram.hpp"
#include "steersmc/token_model.hpp"

using namespace steersmc;

namespace {

double prob(const TokenModel& m, const std::vector<std::string>& ctx, const std::string& tok) {
  const auto& v = m.vocabulary();
  TokenSeq ids;
  for (const auto& c : ctx) ids.push_back(*v.find(c));
  return std::exp(m.next_logprobs({ids, kProposalTag, {}})[*v.find(tok)]);
}

double row_sum(const TokenModel& m, const TokenSeq& ctx) {
  double s = 0.0;
  for (double lp : m.next_logprobs({ctx, kProposalTag, {}})) s += std::exp(lp);
  return s;
}

}  // namespace

TEST_CASE("vocabulary basics") {
  const auto v = Vocabulary::characters({"a", "b", "é"});
  CHECK(v.size() == 4);
  CHECK(v.eos() == 3);
  CHECK_FALSE(v.word_level());
  CHECK(v.tokenize("abé") == TokenSeq{0, 1, 2});
  CHECK(v.render(TokenSeq{0, 2, 3}) == "aé");
  CHECK_THROWS_AS(v.tokenize("z"), SteerError);

  const Vocabulary words({"the", "cat", "sat", "<eos>"}, 3, " ");
  CHECK(words.word_level());
  CHECK(words.tokenize("the cat sat") == TokenSeq{0, 1, 2});
  CHECK(words.render(TokenSeq{0, 1, 2, 3}) == "the cat sat");
  CHECK_THROWS_AS(Vocabulary({"a", "a", "<eos>"}, 2), SteerError);
}

TEST_CASE("bigram examples") {
  NgramOptions opt;
  opt.order = 2;
  opt.smoothing = 0.0;
  const auto aa = train_ngram(std::string_view("aa"), opt);
  CHECK(prob(aa, {"a"}, "a") == doctest::Approx(1.0).epsilon(1e-12));

  opt.smoothing = 1.0;
  const auto ab = train_ngram(std::string_view("ab"), opt);
  // Vocabulary {a, b, <eos>}; count(a b) = 1: (1 + 1) / (1 + 3)
  CHECK(prob(ab, {"a"}, "b") == doctest::Approx(0.5).epsilon(1e-12));

  opt.smoothing = 0.0;
  const auto abab = train_ngram(std::string_view("abab"), opt);
  CHECK(prob(abab, {"a"}, "b") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(prob(abab, {"b"}, "a") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("n-gram rows are normalized for every context") {
  for (double s : {0.0, 0.1, 1.0}) {
    for (int order : {1, 2, 3}) {
      NgramOptions opt;
      opt.order = order;
      opt.smoothing = s;
      opt.eos_at_document_end = true;
      const auto m = train_ngram(std::string_view("the cat sat\n\non the mat"), opt);
      const auto n = static_cast<TokenId>(m.vocabulary().size());
      for (TokenId a = 0; a < n; ++a)
        for (TokenId b = 0; b < n; ++b) CHECK(row_sum(m, {a, b}) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(row_sum(m, {}) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("n-gram training is deterministic and rejects empty corpora") {
  NgramOptions opt;
  opt.tokenizer = Tokenizer::whitespace;
  const auto a = train_ngram(std::string_view("one two three\n\ntwo three four"), opt);
  const auto b = train_ngram(std::string_view("one two three\n\ntwo three four"), opt);
  CHECK(a.same_counts(b));
  CHECK(a.vocabulary().word_level());
  CHECK(a.vocabulary().text(a.vocabulary().eos()) == "<eos>");
  CHECK_THROWS_AS(train_ngram(std::string_view("  \n\n "), opt), SteerError);
  try {
    (void)train_ngram(std::string_view(""), opt);
  } catch (const SteerError& e) {
    CHECK(e.kind() == ErrorKind::EmptyCorpus);
  }
}

TEST_CASE("out-of-vocabulary context is rejected") {
  const UniformModel m(Vocabulary::characters({"a", "b"}));
  const TokenSeq bad{7};
  CHECK_THROWS_AS(m.next_logprobs({bad, kProposalTag, {}}), SteerError);
}

TEST_CASE("table model rows, tags and hints") {
  const auto m = load_table_model(R"({
    "vocab": ["a", "b", "<eos>"],
    "rows": [{"context": [], "dist": [0.5, 0.25, 0.25]},
             {"context": [], "dist": [0.1, 0.8, 0.1], "hint": "Note to self: go"},
             {"context": ["a"], "dist": [0, 0, 1]}],
    "default": "uniform",
    "tags": {"prior": {"rows": [{"context": [], "dist": [0.2, 0.2, 0.6]}], "default": [0.3, 0.3, 0.4]}}
  })");
  const TokenSeq empty;
  const TokenSeq a{0};
  const TokenSeq b{1};
  CHECK(std::exp(m.next_logprobs({empty, kProposalTag, {}})[0]) == doctest::Approx(0.5));
  const std::vector<std::string> hints{"Note to self: go"};
  CHECK(std::exp(m.next_logprobs({empty, kProposalTag, hints})[1]) == doctest::Approx(0.8));
  const std::vector<std::string> other{"Note to self: stop"};
  CHECK(std::exp(m.next_logprobs({empty, kProposalTag, other})[0]) == doctest::Approx(0.5));
  CHECK(m.next_logprobs({a, kProposalTag, {}})[0] == kNegInf);
  CHECK(std::exp(m.next_logprobs({b, kProposalTag, {}})[2]) == doctest::Approx(1.0 / 3));
  CHECK(std::exp(m.next_logprobs({empty, kPriorTag, {}})[2]) == doctest::Approx(0.6));
  CHECK(std::exp(m.next_logprobs({b, kPriorTag, {}})[2]) == doctest::Approx(0.4));

  const TokenSeq cont{0, 2};
  CHECK(sequence_logprob(m, empty, cont) == doctest::Approx(std::log(0.5)));
  const TokenSeq dead{0, 0, 1};
  CHECK(sequence_logprob(m, empty, dead) == kNegInf);
}

TEST_CASE("table model validation") {
  auto kind_of = [](const char* doc) {
    try {
      (void)load_table_model(doc);
    } catch (const SteerError& e) {
      return e.kind();
    }
    return ErrorKind::SourceExhausted;  // sentinel: nothing thrown
  };
  CHECK(kind_of(R"({"vocab": ["a", "<eos>"], "rows": [{"context": [], "dist": [0.5, 0.4]}]})") ==
        ErrorKind::RowNotNormalized);
  CHECK(kind_of(R"({"vocab": ["a", "<eos>"], "rows": [{"context": [], "dist": [1.5, -0.5]}]})") ==
        ErrorKind::RowNotNormalized);
  CHECK(kind_of(R"({"vocab": ["a", "<eos>"], "default": [0.5, 0.5000001]})") == ErrorKind::SourceExhausted);
  CHECK(kind_of(R"({"vocab": ["a", "<eos>"], "rows": [{"context": ["zz"], "dist": [0.5, 0.5]}]})") ==
        ErrorKind::ParseError);
  CHECK(kind_of("{not json") == ErrorKind::ParseError);
}

TEST_CASE("tagged model routes by prompt tag") {
  auto base = std::make_shared<UniformModel>(Vocabulary::characters({"a", "b"}));
  TableModel::RowSet rows;
  rows.default_row = to_logprobs(std::vector<double>{1.0, 0.0, 0.0});
  auto sharp = std::make_shared<TableModel>(Vocabulary::characters({"a", "b"}), rows);
  const TaggedModel m(base, {{"prior", sharp}});
  const TokenSeq empty;
  CHECK(m.next_logprobs({empty, kPriorTag, {}})[0] == 0.0);
  CHECK(std::exp(m.next_logprobs({empty, kProposalTag, {}})[0]) == doctest::Approx(1.0 / 3));
  auto other = std::make_shared<UniformModel>(Vocabulary::characters({"x"}));
  CHECK_THROWS_AS(TaggedModel(base, {{"prior", other}}), SteerError);
}
