#include "luna/embedding_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

namespace luna::metrics {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double side_score(const embed::EmbeddingMatrix& from, const embed::EmbeddingMatrix& to,
                  const embed::IdfTable* idf) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < from.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < to.rows(); ++j) best = std::max(best, dot(from.row(i), to.row(j)));
    const double w = idf ? idf->weight(from.tokens[i]) : 1.0;
    num += w * best;
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

embed::EmbeddingMatrix normalized_copy(const embed::EmbeddingMatrix& m) {
  if (m.normalized) return m;
  embed::EmbeddingMatrix c = m;
  embed::normalize_rows(c);
  return c;
}

// Mean of each n-token window, L2-normalised. A non-empty text shorter than n
// yields one window over all of its tokens.
struct NGramCloud {
  std::vector<std::vector<double>> vectors;
  std::vector<std::vector<std::string>> members;
};

NGramCloud ngram_cloud(const embed::EmbeddingMatrix& m, std::size_t n) {
  NGramCloud cloud;
  if (m.rows() == 0) return cloud;
  const std::size_t width = std::min(n, m.rows());
  for (std::size_t start = 0; start + width <= m.rows(); ++start) {
    std::vector<double> v(m.dim, 0.0);
    std::vector<std::string> toks;
    for (std::size_t k = start; k < start + width; ++k) {
      const auto r = m.row(k);
      for (std::size_t d = 0; d < m.dim; ++d) v[d] += r[d];
      toks.push_back(m.tokens[k]);
    }
    for (double& x : v) x /= static_cast<double>(width);
    const double norm = std::sqrt(dot(v, v));
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
    cloud.vectors.push_back(std::move(v));
    cloud.members.push_back(std::move(toks));
  }
  return cloud;
}

void check_dims(const embed::EmbeddingMatrix& a, const embed::EmbeddingMatrix& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.dim != b.dim) {
    throw MetricError(ErrorKind::ConfigError, "", "embedding dimensions differ: " + std::to_string(a.dim) +
                                                      " vs " + std::to_string(b.dim));
  }
}

}  // namespace

MatchScores greedy_max_sim(const embed::EmbeddingMatrix& candidate, const embed::EmbeddingMatrix& reference,
                           const embed::IdfTable* idf) {
  check_dims(candidate, reference);
  if (candidate.rows() == 0 || reference.rows() == 0) return {};
  const auto cand = normalized_copy(candidate);
  const auto ref = normalized_copy(reference);
  MatchScores s;
  s.precision = side_score(cand, ref, idf);
  s.recall = side_score(ref, cand, idf);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double rouge_we(std::span<const std::string> candidate, std::span<const std::string> reference,
                const embed::VectorTable& table, const RougeWeParams& params) {
  const auto cand_m = embed::embed_static(candidate, table, params.unknown, false);
  const auto ref_m = embed::embed_static(reference, table, params.unknown, false);
  const std::size_t cand_total = cand_m.rows() >= params.n ? cand_m.rows() - params.n + 1 : 0;
  const std::size_t ref_total = ref_m.rows() >= params.n ? ref_m.rows() - params.n + 1 : 0;
  if (cand_total == 0 || ref_total == 0) return overlap_score(0, cand_total, ref_total, params.variant);

  const auto cand = ngram_cloud(cand_m, params.n);
  const auto ref = ngram_cloud(ref_m, params.n);

  struct Pair {
    double sim;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < cand.vectors.size(); ++i) {
    for (std::size_t j = 0; j < ref.vectors.size(); ++j) {
      const double sim = dot(cand.vectors[i], ref.vectors[j]);
      if (sim >= params.threshold) pairs.push_back({sim, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.sim, a.i, a.j) < std::tie(a.sim, b.i, b.j);
  });
  std::vector<bool> cand_used(cand.vectors.size(), false), ref_used(ref.vectors.size(), false);
  std::size_t matched = 0;
  for (const auto& p : pairs) {
    if (cand_used[p.i] || ref_used[p.j]) continue;
    cand_used[p.i] = ref_used[p.j] = true;
    ++matched;
  }
  return overlap_score(matched, cand_total, ref_total, params.variant);
}

double moverscore(const embed::EmbeddingMatrix& candidate, const embed::EmbeddingMatrix& reference,
                  const MoverParams& params, const embed::IdfTable* idf) {
  check_dims(candidate, reference);
  if (candidate.rows() == 0 || reference.rows() == 0) return 0.0;
  const auto cand = ngram_cloud(candidate, params.n_gram);
  const auto ref = ngram_cloud(reference, params.n_gram);

  auto weights = [&](const NGramCloud& c) {
    std::vector<double> w(c.vectors.size(), 1.0);
    if (idf) {
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = 0.0;
        for (const auto& t : c.members[k]) w[k] += idf->weight(t);
      }
    }
    double sum = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(sum > 0.0)) {
      std::fill(w.begin(), w.end(), 1.0);
      sum = static_cast<double>(w.size());
    }
    for (double& x : w) x /= sum;
    return w;
  };

  transport::Problem problem;
  problem.supply = weights(cand);
  problem.demand = weights(ref);
  problem.cost.reserve(cand.vectors.size() * ref.vectors.size());
  for (const auto& a : cand.vectors) {
    for (const auto& b : ref.vectors) {
      double sq = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) sq += (a[d] - b[d]) * (a[d] - b[d]);
      problem.cost.push_back(std::sqrt(sq));
    }
  }
  const auto solution = transport::solve_transport(problem, params.exact_cap, params.sinkhorn);
  return 1.0 / (1.0 + std::max(0.0, solution.cost));
}

namespace {

struct EmbeddingSetup {
  std::shared_ptr<const embed::EmbeddingProvider> provider;
  std::shared_ptr<const embed::IdfTable> idf;
};

std::shared_ptr<const embed::VectorTable> load_table(ParamReader& r, const std::string& path, WarningSink* sink) {
  std::optional<std::size_t> dim;
  if (r.has("expected_dim")) {
    const auto d = r.get_int("expected_dim", 0);
    if (d < 1) r.reject("expected_dim", "must be positive");
    dim = static_cast<std::size_t>(d);
  }
  try {
    return std::make_shared<const embed::VectorTable>(embed::load_static_vectors(path, dim, sink));
  } catch (const MetricError& e) {
    r.reject("vectors_path", e.detail());
  }
}

embed::UnknownPolicy read_unknown_policy(ParamReader& r) {
  const auto s = r.get_string("unknown_policy", "zero_vector");
  try {
    return embed::parse_unknown_policy(s);
  } catch (const MetricError&) {
    r.reject("unknown_policy", "expected zero_vector or skip_token");
  }
}

std::shared_ptr<const embed::IdfTable> read_idf(ParamReader& r, const text::TokenizerConfig& tok) {
  const bool compute = r.get_bool("compute_idfs", false);
  const auto path = r.get_optional_string("idf_corpus_path");
  if (!compute) return nullptr;
  if (!path) r.reject("compute_idfs", "needs idf_corpus_path (one document per line)");
  std::ifstream in(*path);
  if (!in) r.reject("idf_corpus_path", "cannot open '" + *path + "'");
  std::vector<std::vector<std::string>> docs;
  std::string line;
  while (std::getline(in, line)) docs.push_back(text::tokenize(line, tok).tokens);
  if (docs.empty()) r.reject("idf_corpus_path", "corpus is empty");
  return std::make_shared<const embed::IdfTable>(embed::build_idf(docs));
}

EmbeddingSetup read_embedding_setup(ParamReader& r, WarningSink* sink) {
  const auto endpoint = r.get_optional_string("endpoint");
  const auto vectors = r.get_optional_string("vectors_path");
  const std::string fallback = endpoint ? "http" : vectors ? "static" : "one-hot";
  const std::string kind = r.get_string("provider", fallback);

  // Forwarded verbatim to contextual providers.
  ParamMap forwarded;
  for (const char* key : {"model_name", "device", "layer"}) {
    if (r.has(key)) forwarded[key] = r.get_string(key, "");
  }

  const auto tok = text::tokenizer_from_params(r);
  EmbeddingSetup setup;
  if (kind == "one-hot") {
    setup.provider = std::make_shared<embed::OneHotProvider>(tok);
  } else if (kind == "static") {
    if (!vectors) r.reject("provider", "static provider needs vectors_path");
    auto table = load_table(r, *vectors, sink);
    setup.provider = std::make_shared<embed::StaticProvider>(table, read_unknown_policy(r), tok);
  } else if (kind == "http") {
    if (!endpoint) r.reject("provider", "http provider needs endpoint");
    embed::EmbeddingEndpointConfig cfg;
    cfg.http.base_url = *endpoint;
    cfg.http.timeout = std::chrono::milliseconds(r.get_int("timeout_ms", 30'000));
    cfg.http.retries = static_cast<int>(r.get_int("retries", 2));
    cfg.http.backoff = std::chrono::milliseconds(r.get_int("backoff_ms", 500));
    if (cfg.http.retries < 0) r.reject("retries", "must be >= 0");
    if (cfg.http.timeout.count() <= 0) r.reject("timeout_ms", "must be positive");
    cfg.params = std::move(forwarded);
    setup.provider = std::make_shared<embed::HttpEmbeddingProvider>(std::move(cfg));
  } else {
    r.reject("provider", "expected one-hot, static or http");
  }
  setup.idf = read_idf(r, tok);
  return setup;
}

class ProviderMetric : public Metric {
 public:
  ProviderMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, EmbeddingSetup setup)
      : Metric(std::move(d), std::move(sink)), setup_(std::move(setup)) {}

 protected:
  std::pair<embed::EmbeddingMatrix, embed::EmbeddingMatrix> embed_pair(const EvalUnit& u) const {
    const std::string texts[] = {u.candidate, *u.reference};
    std::vector<embed::EmbeddingMatrix> out;
    try {
      out = setup_.provider->embed(texts);
    } catch (const MetricError& e) {
      if (e.kind() == ErrorKind::ConfigError) throw;
      fail(ErrorKind::ProviderFailure, e.detail());
    }
    if (out.size() != 2) fail(ErrorKind::ProviderFailure, "provider returned the wrong number of matrices");
    return {std::move(out[0]), std::move(out[1])};
  }

  const embed::IdfTable* idf() const { return setup_.idf.get(); }

 private:
  EmbeddingSetup setup_;
};

enum class Component { Precision, Recall, F1 };

class BertScoreMetric final : public ProviderMetric {
 public:
  BertScoreMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, EmbeddingSetup setup, Component c)
      : ProviderMetric(std::move(d), std::move(sink), std::move(setup)), component_(c) {}

 protected:
  double score(const EvalUnit& u) const override {
    auto [cand, ref] = embed_pair(u);
    embed::normalize_rows(cand);
    embed::normalize_rows(ref);
    const auto s = greedy_max_sim(cand, ref, idf());
    switch (component_) {
      case Component::Precision: return s.precision;
      case Component::Recall: return s.recall;
      case Component::F1: break;
    }
    return s.f1;
  }

 private:
  Component component_;
};

class MoverScoreMetric final : public ProviderMetric {
 public:
  MoverScoreMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, EmbeddingSetup setup, MoverParams p)
      : ProviderMetric(std::move(d), std::move(sink), std::move(setup)), params_(p) {}

 protected:
  double score(const EvalUnit& u) const override {
    const auto [cand, ref] = embed_pair(u);
    return moverscore(cand, ref, params_, idf());
  }

 private:
  MoverParams params_;
};

class RougeWeMetric final : public Metric {
 public:
  RougeWeMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, std::shared_ptr<const embed::VectorTable> t,
                RougeWeParams p, text::TokenizerConfig tok)
      : Metric(std::move(d), std::move(sink)), table_(std::move(t)), params_(p), tok_(std::move(tok)) {}

 protected:
  double score(const EvalUnit& u) const override {
    return rouge_we(text::tokenize(u.candidate, tok_).tokens, text::tokenize(*u.reference, tok_).tokens, *table_,
                    params_);
  }

 private:
  std::shared_ptr<const embed::VectorTable> table_;
  RougeWeParams params_;
  text::TokenizerConfig tok_;
};

MetricDescriptor embedding_descriptor(std::string name, ParamMap defaults) {
  defaults["higher_is_better"] = true;
  return {std::move(name), Category::Embedding, ReferenceMode::ReferenceBased, Granularity::Sentence,
          std::move(defaults)};
}

}  // namespace

void register_embedding_metrics(Registry& registry) {
  registry.add(embedding_descriptor("bertscore", {{"output", std::string("f1")}, {"compute_idfs", false}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 const auto out = r.get_string("output", "f1");
                 Component c = Component::F1;
                 if (out == "precision") {
                   c = Component::Precision;
                 } else if (out == "recall") {
                   c = Component::Recall;
                 } else if (out != "f1") {
                   r.reject("output", "expected precision, recall or f1");
                 }
                 auto setup = read_embedding_setup(r, sink.get());
                 r.finish();
                 return std::make_shared<BertScoreMetric>(d, std::move(sink), std::move(setup), c);
               });

  registry.add(embedding_descriptor("mover-score", {{"n_gram", std::int64_t{1}}, {"compute_idfs", false}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 MoverParams p;
                 const auto n = r.get_int("n_gram", 1);
                 if (n < 1) r.reject("n_gram", "must be at least 1");
                 p.n_gram = static_cast<std::size_t>(n);
                 const auto cap = r.get_int("exact_cap", 64);
                 if (cap < 1) r.reject("exact_cap", "must be at least 1");
                 p.exact_cap = static_cast<std::size_t>(cap);
                 p.sinkhorn.epsilon = r.get_double("sinkhorn_epsilon", p.sinkhorn.epsilon);
                 p.sinkhorn.max_iter = static_cast<int>(r.get_int("sinkhorn_max_iter", p.sinkhorn.max_iter));
                 p.sinkhorn.tol = r.get_double("sinkhorn_tol", p.sinkhorn.tol);
                 if (!(p.sinkhorn.epsilon > 0.0)) r.reject("sinkhorn_epsilon", "must be positive");
                 auto setup = read_embedding_setup(r, sink.get());
                 r.finish();
                 return std::make_shared<MoverScoreMetric>(d, std::move(sink), std::move(setup), p);
               });

  registry.add(embedding_descriptor("rouge-we", {{"n", std::int64_t{1}},
                                                 {"threshold", 0.8},
                                                 {"variant", std::string("f1")},
                                                 {"unknown_policy", std::string("zero_vector")}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 RougeWeParams p;
                 const auto n = r.get_int("n", 1);
                 if (n < 1) r.reject("n", "must be at least 1");
                 p.n = static_cast<std::size_t>(n);
                 p.threshold = r.get_double("threshold", p.threshold);
                 const auto variant = r.get_string("variant", "f1");
                 try {
                   p.variant = parse_variant(variant);
                 } catch (const MetricError&) {
                   r.reject("variant", "expected recall, precision or f1");
                 }
                 p.unknown = read_unknown_policy(r);
                 const auto path = r.get_optional_string("vectors_path");
                 if (!path) r.reject("vectors_path", "required");
                 auto table = load_table(r, *path, sink.get());
                 auto tok = text::tokenizer_from_params(r);
                 r.finish();
                 return std::make_shared<RougeWeMetric>(d, std::move(sink), std::move(table), p, std::move(tok));
               });
}

}  // namespace luna::metrics
