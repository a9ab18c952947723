#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <unistd.h>

#include "luna/builtin.hpp"
#include "luna/mock_server.hpp"
#include "luna/remote.hpp"

using namespace luna;
using namespace luna::remote;

namespace {

RemoteMetricConfig config_for(const MockServer& s, std::string name = "len-ratio") {
  RemoteMetricConfig c;
  c.name = std::move(name);
  c.http.base_url = s.base_url();
  c.http.timeout = std::chrono::milliseconds(2000);
  c.http.retries = 0;
  c.http.backoff = std::chrono::milliseconds(1);
  return c;
}

MockOptions with_reply(int status, std::string body, std::string_view only = "") {
  MockOptions o;
  o.override_reply = [status, body = std::move(body), only = std::string(only)](
                         std::string_view path, const std::string&) -> std::optional<std::pair<int, std::string>> {
    if (!only.empty() && path != only) return std::nullopt;
    return std::pair<int, std::string>{status, body};
  };
  return o;
}

std::optional<ErrorKind> error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const MetricError& e) {
    return e.kind();
  }
  return std::nullopt;
}

const std::vector<std::string> kOne = {"ab cd"};
const std::vector<std::string> kOneRef = {"ab"};

}  // namespace

TEST(Taxonomy, KnownNames) {
  EXPECT_EQ(known_taxonomy("summaqa")->granularity, Granularity::Corpus);
  EXPECT_EQ(known_taxonomy("blanc")->reference_mode, ReferenceMode::ReferenceFree);
  EXPECT_EQ(known_taxonomy("bary-score")->category, Category::Embedding);
  EXPECT_EQ(known_taxonomy("depth-score")->category, Category::Embedding);
  for (const char* n : {"s3", "infolm", "bartscore"}) {
    EXPECT_EQ(known_taxonomy(n)->category, Category::Model) << n;
    EXPECT_EQ(known_taxonomy(n)->granularity, Granularity::Sentence) << n;
  }
  EXPECT_FALSE(known_taxonomy("bleu"));
}

TEST(MockProfiles, Names) {
  for (auto p : {MockProfile::LenRatio, MockProfile::EchoParam, MockProfile::SummaQaCorpus, MockProfile::ItemHash}) {
    EXPECT_EQ(parse_mock_profile(to_string(p)), p);
  }
  EXPECT_THROW(parse_mock_profile("nope"), MetricError);
  EXPECT_GE(item_hash_score("x"), 0.0);
  EXPECT_LT(item_hash_score("x"), 1.0);
}

TEST(RemoteEvaluate, LenRatioRoundTrip) {
  MockServer s;
  s.start();
  EXPECT_EQ(remote_evaluate(config_for(s), kOne, std::span<const std::string>(kOneRef)), (ScoreVector{0.5}));
  const std::vector<std::string> c = {"", "a b c", "x"};
  const std::vector<std::string> r = {"", "a", "x y z w"};
  const auto out = remote_evaluate(config_for(s), c, std::span<const std::string>(r));
  EXPECT_EQ(out, (ScoreVector{1.0, 1.0 / 3.0, 0.25}));
  EXPECT_EQ(s.evaluate_requests(), 2);
}

TEST(RemoteEvaluate, MissingReferenceIsAProviderFailure) {
  MockServer s;
  s.start();
  try {
    remote_evaluate(config_for(s), kOne, std::nullopt);
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
    EXPECT_NE(std::string(e.what()).find("remote error: MissingReference"), std::string::npos);
  }
}

TEST(RemoteEvaluate, EchoParamMergesServerDefaults) {
  MockOptions o;
  o.profile = MockProfile::EchoParam;
  o.params = {{"value", 0.25}};
  MockServer s(o);
  s.start();
  const std::vector<std::string> c = {"a", "b", "c"};
  auto cfg = config_for(s, "echo");
  EXPECT_EQ(remote_evaluate(cfg, c, std::nullopt), (ScoreVector{0.25, 0.25, 0.25}));
  cfg.params = {{"value", 0.75}};
  EXPECT_EQ(remote_evaluate(cfg, c, std::nullopt), (ScoreVector{0.75, 0.75, 0.75}));
  cfg.params = {{"value", std::string("x")}};
  EXPECT_EQ(error_of([&] { remote_evaluate(cfg, c, std::nullopt); }), ErrorKind::ProviderFailure);
}

TEST(RemoteEvaluate, OrderPreservedUnderShuffling) {
  MockOptions o;
  o.profile = MockProfile::ItemHash;
  MockServer s(o);
  s.start();
  std::vector<std::string> c;
  for (int i = 0; i < 40; ++i) c.push_back("candidate number " + std::to_string(i));
  const auto base = remote_evaluate(config_for(s, "hash"), c, std::nullopt);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_EQ(base[i], item_hash_score(c[i]));
  std::mt19937_64 rng(7);
  std::vector<std::size_t> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> shuffled;
    for (auto k : perm) shuffled.push_back(c[k]);
    const auto got = remote_evaluate(config_for(s, "hash"), shuffled, std::nullopt);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(got[i], base[perm[i]]);
  }
}

TEST(RemoteEvaluate, RetryThenSucceed) {
  MockOptions o;
  o.stall_first = 2;
  o.stall = std::chrono::milliseconds(400);
  MockServer s(o);
  s.start();
  auto cfg = config_for(s);
  cfg.http.timeout = std::chrono::milliseconds(150);
  cfg.http.retries = 2;
  const auto first = remote_evaluate(cfg, kOne, std::span<const std::string>(kOneRef));
  EXPECT_EQ(first, (ScoreVector{0.5}));
  EXPECT_EQ(s.evaluate_requests(), 3);
  // Retries are idempotent: later calls give the same scores.
  EXPECT_EQ(remote_evaluate(cfg, kOne, std::span<const std::string>(kOneRef)), first);
}

TEST(RemoteEvaluate, RetriesExhausted) {
  MockOptions o;
  o.stall_first = 10;
  o.stall = std::chrono::milliseconds(300);
  MockServer s(o);
  s.start();
  auto cfg = config_for(s);
  cfg.http.timeout = std::chrono::milliseconds(100);
  cfg.http.retries = 1;
  EXPECT_EQ(error_of([&] { remote_evaluate(cfg, kOne, std::span<const std::string>(kOneRef)); }),
            ErrorKind::RemoteProtocolError);
  EXPECT_EQ(s.evaluate_requests(), 2);
}

TEST(RemoteEvaluate, ProtocolErrorBranches) {
  struct Case {
    int status;
    std::string body;
    ErrorKind want;
  };
  const std::vector<Case> cases = {
      {200, R"({"scores":[0.1,0.2]})", ErrorKind::RemoteProtocolError},                      // count mismatch
      {200, R"({"scores":[]})", ErrorKind::RemoteProtocolError},                             // too few
      {200, R"({"scores":"0.5"})", ErrorKind::RemoteProtocolError},                          // not an array
      {200, R"({"values":[0.5]})", ErrorKind::RemoteProtocolError},                          // no scores
      {200, R"([0.5])", ErrorKind::RemoteProtocolError},                                     // not an object
      {200, "garbage", ErrorKind::RemoteProtocolError},                                      // not JSON
      {200, R"({"scores":["x"]})", ErrorKind::RemoteProtocolError},                          // non-numeric
      {200, R"({"scores":[null]})", ErrorKind::RemoteProtocolError},                         // null
      {200, R"({"scores":[1e999]})", ErrorKind::RemoteProtocolError},                        // overflow
      {500, R"({"error":{"kind":"X","message":"boom"}})", ErrorKind::RemoteProtocolError},   // 5xx
      {404, "", ErrorKind::RemoteProtocolError},                                             // unknown route
      {422, R"({"error":{"kind":"ProviderFailure","message":"oom"}})", ErrorKind::ProviderFailure},
      {422, R"({"error":{"message":"no kind"}})", ErrorKind::ProviderFailure},
      {422, R"({"error":"flat"})", ErrorKind::RemoteProtocolError},
      {422, R"({"error":{"kind":"X"}})", ErrorKind::RemoteProtocolError},
      {422, "not json", ErrorKind::RemoteProtocolError},
  };
  for (std::size_t k = 0; k < cases.size(); ++k) {
    MockServer s(with_reply(cases[k].status, cases[k].body, "/evaluate"));
    s.start();
    EXPECT_EQ(error_of([&] { remote_evaluate(config_for(s), kOne, std::span<const std::string>(kOneRef)); }),
              cases[k].want)
        << k << ": " << cases[k].body;
  }
}

TEST(RemoteEvaluate, UnreachableAndInvalidUrl) {
  RemoteMetricConfig c;
  c.name = "x";
  c.http.base_url = "http://127.0.0.1:1";
  c.http.retries = 0;
  EXPECT_EQ(error_of([&] { remote_evaluate(c, kOne, std::nullopt); }), ErrorKind::RemoteProtocolError);
  c.http.base_url = "not a url";
  EXPECT_EQ(error_of([&] { remote_evaluate(c, kOne, std::nullopt); }), ErrorKind::RemoteProtocolError);
}

TEST(RemoteEvaluate, RequestBodyShape) {
  std::string seen;
  MockOptions o;
  o.override_reply = [&seen](std::string_view, const std::string& body) -> std::optional<std::pair<int, std::string>> {
    seen = body;
    return std::pair<int, std::string>{200, R"({"scores":[0.5]})"};
  };
  MockServer s(o);
  s.start();
  auto cfg = config_for(s, "local-name");
  cfg.remote_name = "wire-name";
  cfg.params = {{"lang", std::string("en")}};
  remote_evaluate(cfg, kOne, std::nullopt);
  const auto j = nlohmann::json::parse(seen);
  EXPECT_EQ(j["metric"], "wire-name");
  EXPECT_EQ(j["candidates"], nlohmann::json::array({"ab cd"}));
  EXPECT_TRUE(j["references"].is_null());
  EXPECT_EQ(j["params"]["lang"], "en");
}

TEST(RemoteEvaluate, AuthorizationHeaderFromEnvironment) {
  MockServer s;
  s.start();
  ::setenv("LUNA_REMOTE_TOKEN", "sekrit", 1);
  remote_evaluate(config_for(s), kOne, std::span<const std::string>(kOneRef));
  EXPECT_EQ(s.last_authorization(), "Bearer sekrit");
  ::unsetenv("LUNA_REMOTE_TOKEN");
  remote_evaluate(config_for(s), kOne, std::span<const std::string>(kOneRef));
  EXPECT_EQ(s.last_authorization(), "");
}

TEST(RemoteInfo, ReportsProfile) {
  MockOptions o;
  o.profile = MockProfile::SummaQaCorpus;
  MockServer s(o);
  s.start();
  const auto d = remote_info(config_for(s, "summaqa"));
  EXPECT_EQ(d.name, "summaqa");
  EXPECT_EQ(d.granularity, Granularity::Corpus);
  EXPECT_EQ(d.reference_mode, ReferenceMode::ReferenceBased);
  EXPECT_EQ(d.category, Category::Model);
  EXPECT_EQ(std::get<std::string>(d.params.at("remote_name")), "summaqa");
  EXPECT_EQ(std::get<std::string>(d.params.at("base_url")), s.base_url());
}

TEST(RemoteInfo, MalformedReplies) {
  const std::vector<std::pair<int, std::string>> cases = {
      {500, "{}"},
      {200, "nope"},
      {200, "[]"},
      {200, R"({"granularity":"sentence","reference_mode":"reference_free"})"},
      {200, R"({"name":"x","reference_mode":"reference_free"})"},
      {200, R"({"name":"x","granularity":"sentence"})"},
      {200, R"({"name":"x","granularity":"paragraph","reference_mode":"reference_free"})"},
      {200, R"({"name":"x","granularity":"sentence","reference_mode":"maybe"})"},
      {200, R"({"name":"x","granularity":"sentence","reference_mode":"reference_free","category":"magic"})"},
      {200, R"({"name":"x","granularity":"sentence","reference_mode":"reference_free","params_schema":[]})"},
      {200, R"({"name":7,"granularity":"sentence","reference_mode":"reference_free"})"},
  };
  for (std::size_t k = 0; k < cases.size(); ++k) {
    MockServer s(with_reply(cases[k].first, cases[k].second, "/info"));
    s.start();
    EXPECT_EQ(error_of([&] { remote_info(config_for(s)); }), ErrorKind::RemoteProtocolError) << k;
  }
  MockServer ok(with_reply(200, R"({"name":"x","granularity":"sentence","reference_mode":"reference_free"})", "/info"));
  ok.start();
  EXPECT_EQ(remote_info(config_for(ok, "unknown-metric")).category, Category::Model);
  EXPECT_EQ(remote_info(config_for(ok, "bary-score")).category, Category::Embedding);
}

TEST(RemoteRegistry, ProbeFillsGranularity) {
  MockOptions o;
  o.profile = MockProfile::SummaQaCorpus;
  MockServer s(o);
  s.start();
  Registry reg;
  auto cfg = config_for(s, "corpus-qa");
  register_remote_metric(reg, cfg);
  EXPECT_EQ(reg.descriptor("corpus-qa").granularity, Granularity::Sentence);
  EXPECT_EQ(std::get<bool>(reg.descriptor("corpus-qa").params.at("remote")), true);
  auto m = reg.init_metric("corpus-qa");
  EXPECT_EQ(s.info_requests(), 1);
  EXPECT_EQ(m->descriptor().granularity, Granularity::Corpus);

  // Corpus granularity refuses single examples before any network call.
  EXPECT_EQ(error_of([&] { m->evaluate_example({"a b", std::string("a")}); }), ErrorKind::GranularityViolation);
  EXPECT_EQ(s.evaluate_requests(), 0);

  const std::vector<std::string> c = {"a b", "c"}, r = {"a", "b"};
  const auto corpus = m->evaluate_corpus(c, std::span<const std::string>(r));
  EXPECT_EQ(corpus, (ScoreVector{1.0, 0.0}));
  CollectingWarningSink sink;
  BatchOptions bo;
  bo.sink = &sink;
  EXPECT_EQ(m->evaluate_batch(c, std::span<const std::string>(r), bo), corpus);
  EXPECT_EQ(sink.size(), 1u);
  EXPECT_EQ(s.evaluate_requests(), 2);
}

TEST(RemoteRegistry, InitOverridesAndForwarding) {
  MockOptions o;
  o.profile = MockProfile::EchoParam;
  MockServer s(o);
  s.start();
  Registry reg;
  auto cfg = config_for(s, "echo");
  cfg.http.base_url = "http://127.0.0.1:1";
  cfg.probe = false;
  cfg.reference_mode = ReferenceMode::ReferenceFree;
  register_remote_metric(reg, cfg);
  auto m = reg.init_metric("echo", {{"base_url", s.base_url()}, {"value", 0.5}, {"retries", std::int64_t{0}}});
  EXPECT_EQ(s.info_requests(), 0);
  const std::vector<std::string> c = {"x", "y"};
  EXPECT_EQ(m->evaluate_batch(c, std::nullopt), (ScoreVector{0.5, 0.5}));
  EXPECT_EQ(m->evaluate_example({"z", std::nullopt}), 0.5);
  EXPECT_THROW(reg.init_metric("echo", {{"retries", std::int64_t{-1}}}), MetricError);
  EXPECT_THROW(reg.init_metric("echo", {{"timeout_ms", std::int64_t{0}}}), MetricError);
  EXPECT_EQ(error_of([&] { reg.init_metric("echo", {{"probe", true}, {"retries", std::int64_t{0}}}); }),
            ErrorKind::RemoteProtocolError);
}

TEST(RemoteRegistry, ExplicitTaxonomyWinsOverProbe) {
  MockServer s;
  s.start();
  Registry reg;
  auto cfg = config_for(s, "ratio");
  cfg.granularity = Granularity::Sentence;
  cfg.reference_mode = ReferenceMode::ReferenceFree;
  register_remote_metric(reg, cfg);
  auto m = reg.init_metric("ratio");
  EXPECT_EQ(m->descriptor().reference_mode, ReferenceMode::ReferenceFree);
}

TEST(RemoteRegistry, MockPortCollision) {
  MockServer a;
  a.start();
  MockServer b;
  EXPECT_EQ(error_of([&] { b.start(a.port()); }), ErrorKind::ConfigError);
}

TEST(LoadRegistrations, Formats) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto write = [&](const std::string& name, const std::string& content) {
    const auto p = dir / ("luna_reg_" + std::to_string(::getpid()) + "_" + name + ".json");
    std::ofstream(p) << content;
    return p;
  };
  const auto empty = write("empty", "{}");
  EXPECT_TRUE(load_registrations(empty).empty());
  const auto arr = write("arr", R"([{"name":"blanc","base_url":"http://h:1","probe":false,"retries":0,
      "timeout_ms":100,"backoff_ms":5,"metric":"BLANC","params":{"lang":"en","k":3}}])");
  const auto a = load_registrations(arr);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].name, "blanc");
  EXPECT_EQ(a[0].remote_name, "BLANC");
  EXPECT_FALSE(a[0].probe);
  EXPECT_EQ(a[0].http.retries, 0);
  EXPECT_EQ(a[0].http.timeout, std::chrono::milliseconds(100));
  EXPECT_EQ(std::get<std::string>(a[0].params.at("lang")), "en");
  EXPECT_EQ(std::get<std::int64_t>(a[0].params.at("k")), 3);
  const auto obj = write("obj", R"({"remote_metrics":[{"name":"q","base_url":"http://h:1",
      "granularity":"corpus","reference_mode":"reference_based","category":"model"}]})");
  const auto b = load_registrations(obj);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0].granularity, Granularity::Corpus);

  for (const char* bad : {"nope", "3", R"({"x":1})", R"([{"name":"a"}])", R"([{"name":"a","base_url":"u",
      "granularity":"page"}])", R"([{"name":"a","base_url":"u","granularity":3}])"}) {
    const auto p = write("bad", bad);
    EXPECT_EQ(error_of([&] { load_registrations(p); }), ErrorKind::ConfigError) << bad;
  }
  EXPECT_EQ(error_of([&] { load_registrations(dir / "luna_missing_reg.json"); }), ErrorKind::ConfigError);
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    if (f.path().filename().string().starts_with("luna_reg_" + std::to_string(::getpid()))) {
      std::filesystem::remove(f.path());
    }
  }
}
