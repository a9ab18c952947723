#include <gtest/gtest.h>

#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include "luna/builtin.hpp"
#include "luna/core.hpp"
#include "luna/remote.hpp"
#include "oracles.hpp"

using namespace luna;

namespace {

// Corpus metric scoring each candidate by its share of the pooled candidate length.
class ShareMetric final : public Metric {
 public:
  explicit ShareMetric(std::shared_ptr<WarningSink> sink)
      : Metric({"share", Category::String, ReferenceMode::ReferenceFree, Granularity::Corpus, {}}, std::move(sink)) {}

 protected:
  ScoreVector score_corpus(std::span<const EvalUnit> units, const BatchOptions&) const override {
    double total = 0.0;
    for (const auto& u : units) total += static_cast<double>(u.candidate.size());
    ScoreVector out;
    for (const auto& u : units) out.push_back(total == 0.0 ? 0.0 : static_cast<double>(u.candidate.size()) / total);
    return out;
  }
};

class NanMetric final : public Metric {
 public:
  NanMetric() : Metric({"nan", Category::String, ReferenceMode::ReferenceFree, Granularity::Sentence, {}}) {}

 protected:
  double score(const EvalUnit&) const override { return std::numeric_limits<double>::quiet_NaN(); }
};

std::vector<std::string> strs(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST(Enums, RoundTrip) {
  for (auto c : {Category::String, Category::Embedding, Category::Model}) EXPECT_EQ(parse_category(to_string(c)), c);
  for (auto m : {ReferenceMode::ReferenceBased, ReferenceMode::ReferenceFree}) {
    EXPECT_EQ(parse_reference_mode(to_string(m)), m);
  }
  for (auto g : {Granularity::Sentence, Granularity::Corpus}) EXPECT_EQ(parse_granularity(to_string(g)), g);
  EXPECT_EQ(to_string(ReferenceMode::ReferenceFree), "reference_free");
  EXPECT_THROW(parse_granularity("paragraph"), MetricError);
  EXPECT_EQ(parse_error_kind("EmptyInput"), ErrorKind::EmptyInput);
  EXPECT_FALSE(parse_error_kind("Nope").has_value());
}

TEST(MetricErrorTest, CarriesKindAndMetric) {
  MetricError e(ErrorKind::MissingReference, "bleu", "reference is required");
  EXPECT_EQ(e.kind(), ErrorKind::MissingReference);
  EXPECT_EQ(e.metric(), "bleu");
  EXPECT_EQ(e.detail(), "reference is required");
  EXPECT_STREQ(e.what(), "MissingReference [bleu]: reference is required");
}

TEST(EvaluateExample, IdenticalBleuIsOne) {
  auto m = default_registry().init_metric("bleu");
  EXPECT_DOUBLE_EQ(m->evaluate_example({"the cat sat", "the cat sat"}), 1.0);
}

TEST(EvaluateExample, RougeOneHandValue) {
  auto m = default_registry().init_metric("rouge-1");
  EXPECT_NEAR(m->evaluate_example({"the cat", "the cat sat"}), 0.8, 1e-12);
}

TEST(EvaluateExample, MissingReferenceRejected) {
  auto m = default_registry().init_metric("bleu");
  try {
    m->evaluate_example({"a b", std::nullopt});
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingReference);
  }
}

TEST(EvaluateExample, NonFiniteScoreIsProviderFailure) {
  NanMetric m;
  try {
    m.evaluate_example({"x", std::nullopt});
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
  }
  const auto c = strs({"x"});
  EXPECT_THROW(m.evaluate_batch(c, std::nullopt), MetricError);
}

TEST(EvaluateBatch, BleuIdenticalPairs) {
  auto m = default_registry().init_metric("bleu");
  const auto c = strs({"a b", "a b"});
  EXPECT_EQ(m->evaluate_batch(c, std::span<const std::string>(c)), (ScoreVector{1.0, 1.0}));
}

TEST(EvaluateBatch, LengthWithoutReferences) {
  auto m = default_registry().init_metric("length");
  const auto c = strs({"a b c"});
  EXPECT_EQ(m->evaluate_batch(c, std::nullopt), (ScoreVector{3.0}));
}

TEST(EvaluateBatch, WorkerCountDoesNotChangeScores) {
  auto reg = default_registry();
  std::mt19937_64 rng(7);
  const std::vector<std::string> alpha = {"the", "cat", "sat", "on", "mat", "dog", "ran", "!"};
  std::vector<std::string> c, r;
  for (int i = 0; i < 64; ++i) {
    c.push_back(oracle::join(oracle::random_tokens(rng, alpha, 0, 10)));
    r.push_back(oracle::join(oracle::random_tokens(rng, alpha, 0, 10)));
  }
  for (const char* name : {"bleu", "meteor", "chrf", "mover-score", "coverage"}) {
    auto m = reg.init_metric(name);
    const auto a = m->evaluate_batch(c, std::span<const std::string>(r), {1});
    const auto b = m->evaluate_batch(c, std::span<const std::string>(r), {8});
    ASSERT_EQ(a.size(), 64u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(a[i]), std::bit_cast<std::uint64_t>(b[i])) << name;
  }
}

TEST(EvaluateBatch, LengthMismatchIsConfigError) {
  auto m = default_registry().init_metric("bleu");
  const auto c = strs({"a", "b"});
  const auto r = strs({"a"});
  try {
    m->evaluate_batch(c, std::span<const std::string>(r));
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}

TEST(EvaluateBatch, MissingReferencesRejected) {
  auto m = default_registry().init_metric("rouge-l");
  const auto c = strs({"a"});
  try {
    m->evaluate_batch(c, std::nullopt);
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingReference);
  }
  EXPECT_TRUE(m->evaluate_batch({}, std::nullopt).empty());
}

TEST(CorpusContract, ExampleRaisesGranularityViolation) {
  auto sink = std::make_shared<CollectingWarningSink>();
  ShareMetric m(sink);
  try {
    m.evaluate_example({"a", std::nullopt});
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GranularityViolation);
  }
  EXPECT_EQ(sink->size(), 0u);
}

TEST(CorpusContract, BatchWarnsOnceAndDelegates) {
  auto sink = std::make_shared<CollectingWarningSink>();
  ShareMetric m(sink);
  const auto c = strs({"ab", "cd", "abcd"});
  const auto batch = m.evaluate_batch(c, std::nullopt);
  EXPECT_EQ(sink->size(), 1u);
  EXPECT_NE(sink->messages()[0].find("processing the textual corpus"), std::string::npos);
  const auto corpus = m.evaluate_corpus(c, {});
  EXPECT_EQ(batch, corpus);
  EXPECT_EQ(corpus, (ScoreVector{0.25, 0.25, 0.5}));
  EXPECT_EQ(sink->size(), 1u);
}

TEST(CorpusContract, BatchOptionSinkOverridesInstanceSink) {
  auto sink = std::make_shared<CollectingWarningSink>();
  CollectingWarningSink call_sink;
  ShareMetric m(sink);
  const auto c = strs({"a"});
  m.evaluate_batch(c, std::nullopt, {1, &call_sink});
  EXPECT_EQ(sink->size(), 0u);
  EXPECT_EQ(call_sink.size(), 1u);
}

TEST(EvaluateCorpus, LengthMatchesInputAndEmptyCorpus) {
  ShareMetric m(std::make_shared<CollectingWarningSink>());
  const auto c = strs({"a", "b", "c"});
  EXPECT_EQ(m.evaluate_corpus(c, c).size(), 3u);
  EXPECT_TRUE(m.evaluate_corpus({}, {}).empty());
}

TEST(EvaluateCorpus, SentenceMetricDelegatesToBatch) {
  auto m = default_registry().init_metric("rouge-1");
  const auto c = strs({"the cat", "a b"});
  const auto r = strs({"the cat sat", "a b"});
  EXPECT_EQ(m->evaluate_corpus(c, r), m->evaluate_batch(c, std::span<const std::string>(r)));
}

TEST(ParallelMap, RethrowsLowestFailingIndex) {
  try {
    parallel_map(100, 8, [](std::size_t i) -> double {
      if (i == 17 || i == 60) throw std::runtime_error("fail " + std::to_string(i));
      return 0.0;
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "fail 17");
  }
  const auto v = parallel_map(10, 3, [](std::size_t i) { return static_cast<double>(i * i); });
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(v[i], static_cast<double>(i * i));
  EXPECT_TRUE(parallel_map(0, 4, [](std::size_t) { return 1.0; }).empty());
}

TEST(WarningSinkTest, CollectingSinkIsThreadSafe) {
  CollectingWarningSink sink;
  std::vector<std::jthread> ts;
  for (int t = 0; t < 8; ++t) {
    ts.emplace_back([&] {
      for (int i = 0; i < 200; ++i) sink.warn("m", "w");
    });
  }
  ts.clear();
  EXPECT_EQ(sink.size(), 1600u);
  EXPECT_EQ(sink.messages()[0], "m: w");
  sink.clear();
  EXPECT_EQ(sink.size(), 0u);
}

TEST(Registry, ContainsBuiltinsWithTableTaxonomy) {
  const auto reg = default_registry();
  struct Row {
    const char* name;
    Category c;
    ReferenceMode m;
  };
  const Row rows[] = {
      {"bleu", Category::String, ReferenceMode::ReferenceBased},
      {"rouge-1", Category::String, ReferenceMode::ReferenceBased},
      {"rouge-2", Category::String, ReferenceMode::ReferenceBased},
      {"rouge-l", Category::String, ReferenceMode::ReferenceBased},
      {"chrf", Category::String, ReferenceMode::ReferenceBased},
      {"meteor", Category::String, ReferenceMode::ReferenceBased},
      {"coverage", Category::String, ReferenceMode::ReferenceFree},
      {"density", Category::String, ReferenceMode::ReferenceFree},
      {"compression", Category::String, ReferenceMode::ReferenceFree},
      {"length", Category::String, ReferenceMode::ReferenceFree},
      {"novelty", Category::String, ReferenceMode::ReferenceFree},
      {"repetition", Category::String, ReferenceMode::ReferenceFree},
      {"rouge-we", Category::Embedding, ReferenceMode::ReferenceBased},
      {"bertscore", Category::Embedding, ReferenceMode::ReferenceBased},
      {"mover-score", Category::Embedding, ReferenceMode::ReferenceBased},
  };
  EXPECT_EQ(reg.list().size(), std::size(rows));
  for (const auto& row : rows) {
    ASSERT_TRUE(reg.contains(row.name)) << row.name;
    const auto& d = reg.descriptor(row.name);
    EXPECT_EQ(d.category, row.c) << row.name;
    EXPECT_EQ(d.reference_mode, row.m) << row.name;
    EXPECT_EQ(d.granularity, Granularity::Sentence) << row.name;
  }
}

TEST(Registry, ListIsSortedByName) {
  const auto list = default_registry().list();
  for (std::size_t i = 1; i < list.size(); ++i) EXPECT_LT(list[i - 1].name, list[i].name);
}

TEST(Registry, RemoteRegistrationAppearsWithModelCategory) {
  auto reg = default_registry();
  remote::RemoteMetricConfig cfg;
  cfg.name = "blanc";
  cfg.http.base_url = "http://127.0.0.1:9";
  cfg.probe = false;
  remote::register_remote_metric(reg, cfg);
  ASSERT_TRUE(reg.contains("blanc"));
  EXPECT_EQ(reg.descriptor("blanc").category, Category::Model);
  EXPECT_EQ(reg.descriptor("blanc").reference_mode, ReferenceMode::ReferenceFree);
}

TEST(Registry, DuplicateAndEmptyNamesRejected) {
  auto reg = default_registry();
  auto named = [](std::string n) {
    return MetricDescriptor{std::move(n), Category::String, ReferenceMode::ReferenceFree, Granularity::Sentence, {}};
  };
  auto factory = [](const MetricDescriptor&, const ParamMap&, std::shared_ptr<WarningSink>) -> MetricPtr {
    return nullptr;
  };
  EXPECT_THROW(reg.add(named("bleu"), factory), MetricError);
  EXPECT_THROW(reg.add(named(""), factory), MetricError);
}

TEST(InitMetric, ValidAndInvalidParams) {
  const auto reg = default_registry();
  EXPECT_NE(reg.init_metric("bleu", {{"max_n", std::int64_t{4}}}), nullptr);
  EXPECT_NE(reg.init_metric("mover-score", {{"n_gram", std::int64_t{1}}, {"compute_idfs", false}}), nullptr);
  auto kind_of = [&](std::string_view name, const ParamMap& p) {
    try {
      reg.init_metric(name, p);
    } catch (const MetricError& e) {
      return e.kind();
    }
    return ErrorKind::ProviderFailure;
  };
  EXPECT_EQ(kind_of("nope", {}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of("rouge-we", {{"vectors_path", std::string("/nonexistent/vectors.txt")}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of("bleu", {{"max_n", std::int64_t{0}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of("bleu", {{"max_n", std::int64_t{10}}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of("bleu", {{"smoothing_epsilon", 0.0}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of("bleu", {{"no_such_param", true}}), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of("bleu", {{"max_n", std::string("four")}}), ErrorKind::ConfigError);
}

TEST(InitMetric, InstanceDescriptorReflectsParams) {
  auto m = default_registry().init_metric("bleu", {{"max_n", std::int64_t{2}}});
  EXPECT_EQ(std::get<std::int64_t>(m->descriptor().params.at("max_n")), 2);
  EXPECT_TRUE(std::get<bool>(m->descriptor().params.at("higher_is_better")));
}

TEST(ParamReaderTest, TypedAccessAndUnusedKeys) {
  ParamMap p{{"i", std::int64_t{3}}, {"d", 2.0}, {"b", true}, {"s", std::string("x")}};
  ParamReader r("m", p);
  EXPECT_EQ(r.get_int("i", 0), 3);
  EXPECT_EQ(r.get_int("d", 0), 2);
  EXPECT_DOUBLE_EQ(r.get_double("i", 0.0), 3.0);
  EXPECT_TRUE(r.get_bool("b", false));
  EXPECT_THROW(r.finish(), MetricError);
  EXPECT_EQ(r.get_string("s", ""), "x");
  EXPECT_EQ(r.get_int("missing", 9), 9);
  EXPECT_NO_THROW(r.finish());

  ParamMap q{{"d", 2.5}};
  ParamReader r2("m", q);
  EXPECT_THROW(r2.get_int("d", 0), MetricError);
}

TEST(Determinism, RepeatedCallsAreBitwiseEqual) {
  const auto reg = default_registry();
  const auto c = strs({"the quick brown fox", "jumps over", ""});
  const auto r = strs({"a quick brown dog", "jumped over it", "x"});
  for (const auto& d : reg.list()) {
    if (d.name == "rouge-we") continue;
    auto m = reg.init_metric(d.name);
    std::optional<std::span<const std::string>> refs = std::span<const std::string>(r);
    ScoreVector a, b;
    try {
      a = m->evaluate_batch(c, refs);
      b = m->evaluate_batch(c, refs);
    } catch (const MetricError& e) {
      EXPECT_EQ(e.kind(), ErrorKind::EmptyInput) << d.name;
      continue;
    }
    EXPECT_EQ(a, b) << d.name;
    for (double s : a) EXPECT_TRUE(std::isfinite(s)) << d.name;
  }
}
