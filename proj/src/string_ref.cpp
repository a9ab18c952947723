#include "luna/string_ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace luna::metrics {

Variant parse_variant(std::string_view s) {
  if (s == "recall") return Variant::Recall;
  if (s == "precision") return Variant::Precision;
  if (s == "f1") return Variant::F1;
  throw MetricError(ErrorKind::ConfigError, "", "unknown variant '" + std::string(s) + "'");
}

double overlap_score(std::size_t overlap, std::size_t candidate_total, std::size_t reference_total,
                     Variant variant) {
  const double precision =
      candidate_total == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(candidate_total);
  const double recall =
      reference_total == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(reference_total);
  switch (variant) {
    case Variant::Precision: return precision;
    case Variant::Recall: return recall;
    case Variant::F1: break;
  }
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

std::size_t clipped_overlap(const text::NGramMultiset& a, const text::NGramMultiset& b) {
  std::size_t overlap = 0;
  auto ia = a.counts.begin();
  auto ib = b.counts.begin();
  while (ia != a.counts.end() && ib != b.counts.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      overlap += std::min(ia->second, ib->second);
      ++ia;
      ++ib;
    }
  }
  return overlap;
}

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            const BleuParams& params) {
  if (candidate.empty()) return 0.0;
  const auto c = static_cast<double>(candidate.size());
  const auto r = static_cast<double>(reference.size());

  const std::size_t orders = std::min<std::size_t>(static_cast<std::size_t>(params.max_n), candidate.size());
  const double weight = 1.0 / static_cast<double>(orders);
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= orders; ++n) {
    const auto cand = text::word_ngrams(candidate, n);
    const auto ref = text::word_ngrams(reference, n);
    const auto matched = clipped_overlap(cand, ref);
    const auto total = static_cast<double>(cand.total());
    double p;
    if (matched > 0) {
      p = static_cast<double>(matched) / total;
    } else if (n >= 2) {
      p = params.smoothing_epsilon / total;
    } else {
      return 0.0;
    }
    log_sum += weight * std::log(p);
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum);
}

double rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n,
               Variant variant) {
  const auto cand = text::word_ngrams(candidate, n);
  const auto ref = text::word_ngrams(reference, n);
  return overlap_score(clipped_overlap(cand, ref), cand.total(), ref.total(), variant);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference, Variant variant) {
  return overlap_score(lcs_length(candidate, reference), candidate.size(), reference.size(), variant);
}

double chrf(std::string_view candidate, std::string_view reference, const ChrfParams& params) {
  double precision_sum = 0.0;
  double recall_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= params.char_n_max; ++n) {
    const auto ref = text::char_ngrams(reference, static_cast<std::size_t>(n), true);
    if (ref.counts.empty()) continue;
    const auto cand = text::char_ngrams(candidate, static_cast<std::size_t>(n), true);
    const auto matched = static_cast<double>(clipped_overlap(cand, ref));
    precision_sum += cand.total() == 0 ? 0.0 : matched / static_cast<double>(cand.total());
    recall_sum += matched / static_cast<double>(ref.total());
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double p = precision_sum / orders;
  const double r = recall_sum / orders;
  const double b2 = params.beta * params.beta;
  const double denom = b2 * p + r;
  return denom > 0.0 ? (1.0 + b2) * p * r / denom : 0.0;
}

namespace {

class MeteorAligner {
 public:
  MeteorAligner(std::span<const std::string> cand, std::span<const std::string> ref) : cand_(cand), ref_(ref) {
    std::map<std::string, int> word_ids, stem_ids;
    auto intern = [](std::map<std::string, int>& ids, const std::string& s) {
      return ids.emplace(s, static_cast<int>(ids.size())).first->second;
    };
    for (const auto& t : cand) {
      cand_word_.push_back(intern(word_ids, t));
      cand_stem_.push_back(intern(stem_ids, text::porter_stem(t)));
    }
    for (const auto& t : ref) {
      ref_word_.push_back(intern(word_ids, t));
      ref_stem_.push_back(intern(stem_ids, text::porter_stem(t)));
    }
    const std::size_t words = word_ids.size();
    const std::size_t stems = stem_ids.size();

    cand_rem_word_.assign(words, 0);
    ref_free_word_.assign(words, 0);
    cand_rem_stem_.assign(stems, 0);
    ref_free_stem_.assign(stems, 0);
    for (int w : cand_word_) ++cand_rem_word_[static_cast<std::size_t>(w)];
    for (int w : ref_word_) ++ref_free_word_[static_cast<std::size_t>(w)];
    for (int s : cand_stem_) ++cand_rem_stem_[static_cast<std::size_t>(s)];
    for (int s : ref_stem_) ++ref_free_stem_[static_cast<std::size_t>(s)];

    exact_target_ = exact_bound();
    // Exact pairs stay inside one stem class, so the per-class minimum bounds all matches.
    total_target_ = total_bound();

    used_.assign(ref.size(), false);
    match_of_.assign(cand.size(), kNone);
  }

  MeteorAlignment run() {
    seed_with_greedy();
    search(0, 0, 0, 0);
    return best_;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  static constexpr std::size_t kNodeBudget = 2'000'000;

  std::size_t exact_bound() const {
    std::size_t s = 0;
    for (std::size_t w = 0; w < cand_rem_word_.size(); ++w) s += std::min(cand_rem_word_[w], ref_free_word_[w]);
    return s;
  }

  std::size_t total_bound() const {
    std::size_t s = 0;
    for (std::size_t c = 0; c < cand_rem_stem_.size(); ++c) s += std::min(cand_rem_stem_[c], ref_free_stem_[c]);
    return s;
  }

  bool exact_edge(std::size_t i, std::size_t j) const { return cand_word_[i] == ref_word_[j]; }
  bool stem_edge(std::size_t i, std::size_t j) const { return cand_stem_[i] == ref_stem_[j]; }

  static std::size_t count_chunks(const std::vector<std::size_t>& match_of) {
    std::size_t chunks = 0;
    for (std::size_t i = 0; i < match_of.size(); ++i) {
      if (match_of[i] == kNone) continue;
      const bool extends = i > 0 && match_of[i - 1] != kNone && match_of[i - 1] + 1 == match_of[i];
      if (!extends) ++chunks;
    }
    return chunks;
  }

  void record(const std::vector<std::size_t>& match_of, std::size_t chunks) {
    best_.pairs.clear();
    best_.exact_matches = 0;
    best_.stem_matches = 0;
    for (std::size_t i = 0; i < match_of.size(); ++i) {
      if (match_of[i] == kNone) continue;
      best_.pairs.emplace_back(i, match_of[i]);
      if (exact_edge(i, match_of[i])) {
        ++best_.exact_matches;
      } else {
        ++best_.stem_matches;
      }
    }
    best_.chunks = chunks;
  }

  // Left-to-right first-fit reaches both maximum cardinalities, which gives the
  // search an upper bound on chunks and a fallback if the node budget runs out.
  void seed_with_greedy() {
    std::vector<std::size_t> match_of(cand_.size(), kNone);
    std::vector<bool> used(ref_.size(), false);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < cand_.size(); ++i) {
        if (match_of[i] != kNone) continue;
        for (std::size_t j = 0; j < ref_.size(); ++j) {
          if (used[j]) continue;
          if (pass == 0 ? exact_edge(i, j) : stem_edge(i, j)) {
            match_of[i] = j;
            used[j] = true;
            break;
          }
        }
      }
    }
    record(match_of, count_chunks(match_of));
    // One above the greedy count so an equal-chunk alignment found earlier in
    // lexicographic order replaces the seed.
    best_chunks_ = best_.chunks + 1;
  }

  void search(std::size_t i, std::size_t exact, std::size_t total, std::size_t chunks) {
    if (++nodes_ > kNodeBudget) return;
    if (chunks >= best_chunks_) return;
    if (exact + exact_bound() < exact_target_ || total + total_bound() < total_target_) return;
    if (i == cand_.size()) {
      record(match_of_, chunks);
      best_chunks_ = chunks;
      return;
    }

    const auto w = static_cast<std::size_t>(cand_word_[i]);
    const auto s = static_cast<std::size_t>(cand_stem_[i]);
    --cand_rem_word_[w];
    --cand_rem_stem_[s];

    for (std::size_t j = 0; j < ref_.size(); ++j) {
      if (used_[j] || !stem_edge(i, j)) continue;
      const bool exact_pair = exact_edge(i, j);
      const bool extends = i > 0 && match_of_[i - 1] != kNone && match_of_[i - 1] + 1 == j;
      const auto rw = static_cast<std::size_t>(ref_word_[j]);
      used_[j] = true;
      match_of_[i] = j;
      --ref_free_word_[rw];
      --ref_free_stem_[s];
      search(i + 1, exact + (exact_pair ? 1 : 0), total + 1, chunks + (extends ? 0 : 1));
      ++ref_free_stem_[s];
      ++ref_free_word_[rw];
      match_of_[i] = kNone;
      used_[j] = false;
    }
    search(i + 1, exact, total, chunks);

    ++cand_rem_stem_[s];
    ++cand_rem_word_[w];
  }

  std::span<const std::string> cand_;
  std::span<const std::string> ref_;
  std::vector<int> cand_word_, ref_word_, cand_stem_, ref_stem_;
  std::vector<std::size_t> cand_rem_word_, ref_free_word_, cand_rem_stem_, ref_free_stem_;
  std::size_t exact_target_ = 0;
  std::size_t total_target_ = 0;
  std::vector<bool> used_;
  std::vector<std::size_t> match_of_;
  std::size_t nodes_ = 0;
  std::size_t best_chunks_ = 0;
  MeteorAlignment best_;
};

}  // namespace

MeteorAlignment meteor_align(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return {};
  return MeteorAligner(candidate, reference).run();
}

double meteor_score(const MeteorAlignment& alignment, std::size_t candidate_len, std::size_t reference_len,
                    const MeteorParams& params) {
  const std::size_t m = alignment.pairs.size();
  if (m == 0) return 0.0;
  const double p = static_cast<double>(m) / static_cast<double>(candidate_len);
  const double r = static_cast<double>(m) / static_cast<double>(reference_len);
  const double f_mean = p * r / (params.alpha * p + (1.0 - params.alpha) * r);
  const double frag = static_cast<double>(alignment.chunks) / static_cast<double>(m);
  const double penalty = params.gamma * std::pow(frag, params.beta);
  return f_mean * (1.0 - penalty);
}

double meteor(std::span<const std::string> candidate, std::span<const std::string> reference,
              const MeteorParams& params) {
  return meteor_score(meteor_align(candidate, reference), candidate.size(), reference.size(), params);
}

namespace {

MetricDescriptor string_ref_descriptor(std::string name, ParamMap defaults) {
  defaults["higher_is_better"] = true;
  return {std::move(name), Category::String, ReferenceMode::ReferenceBased, Granularity::Sentence,
          std::move(defaults)};
}

class BleuMetric final : public Metric {
 public:
  BleuMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, text::TokenizerConfig tok, BleuParams p)
      : Metric(std::move(d), std::move(sink)), tok_(std::move(tok)), params_(p) {}

 protected:
  double score(const EvalUnit& u) const override {
    return bleu(text::tokenize(u.candidate, tok_).tokens, text::tokenize(*u.reference, tok_).tokens, params_);
  }

 private:
  text::TokenizerConfig tok_;
  BleuParams params_;
};

class RougeNMetric final : public Metric {
 public:
  RougeNMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, text::TokenizerConfig tok, std::size_t n,
               Variant v)
      : Metric(std::move(d), std::move(sink)), tok_(std::move(tok)), n_(n), variant_(v) {}

 protected:
  double score(const EvalUnit& u) const override {
    return rouge_n(text::tokenize(u.candidate, tok_).tokens, text::tokenize(*u.reference, tok_).tokens, n_,
                   variant_);
  }

 private:
  text::TokenizerConfig tok_;
  std::size_t n_;
  Variant variant_;
};

class RougeLMetric final : public Metric {
 public:
  RougeLMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, text::TokenizerConfig tok, Variant v)
      : Metric(std::move(d), std::move(sink)), tok_(std::move(tok)), variant_(v) {}

 protected:
  double score(const EvalUnit& u) const override {
    return rouge_l(text::tokenize(u.candidate, tok_).tokens, text::tokenize(*u.reference, tok_).tokens,
                   variant_);
  }

 private:
  text::TokenizerConfig tok_;
  Variant variant_;
};

class ChrfMetric final : public Metric {
 public:
  ChrfMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, bool lower, ChrfParams p)
      : Metric(std::move(d), std::move(sink)), lowercase_(lower), params_(p) {}

 protected:
  double score(const EvalUnit& u) const override {
    if (!lowercase_) return chrf(u.candidate, *u.reference, params_);
    return chrf(text::lowercase(u.candidate), text::lowercase(*u.reference), params_);
  }

 private:
  bool lowercase_;
  ChrfParams params_;
};

class MeteorMetric final : public Metric {
 public:
  MeteorMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, text::TokenizerConfig tok, MeteorParams p)
      : Metric(std::move(d), std::move(sink)), tok_(std::move(tok)), params_(p) {}

 protected:
  double score(const EvalUnit& u) const override {
    return meteor(text::tokenize(u.candidate, tok_).tokens, text::tokenize(*u.reference, tok_).tokens, params_);
  }

 private:
  text::TokenizerConfig tok_;
  MeteorParams params_;
};

Variant read_variant(ParamReader& r) {
  const auto v = r.get_string("variant", "f1");
  try {
    return parse_variant(v);
  } catch (const MetricError&) {
    r.reject("variant", "expected recall, precision or f1");
  }
}

}  // namespace

void register_string_ref_metrics(Registry& registry) {
  registry.add(string_ref_descriptor("bleu", {{"max_n", std::int64_t{4}}, {"smoothing_epsilon", 0.1}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 BleuParams p;
                 p.max_n = static_cast<int>(r.get_int("max_n", p.max_n));
                 p.smoothing_epsilon = r.get_double("smoothing_epsilon", p.smoothing_epsilon);
                 if (p.max_n < 1 || p.max_n > 9) r.reject("max_n", "must be in [1, 9]");
                 if (!(p.smoothing_epsilon > 0.0)) r.reject("smoothing_epsilon", "must be positive");
                 auto tok = text::tokenizer_from_params(r);
                 r.finish();
                 return std::make_shared<BleuMetric>(d, std::move(sink), std::move(tok), p);
               });

  for (std::size_t n : {1, 2}) {
    registry.add(string_ref_descriptor("rouge-" + std::to_string(n), {{"variant", std::string("f1")}}),
                 [n](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                   ParamReader r(d.name, params);
                   const Variant v = read_variant(r);
                   auto tok = text::tokenizer_from_params(r);
                   r.finish();
                   return std::make_shared<RougeNMetric>(d, std::move(sink), std::move(tok), n, v);
                 });
  }

  registry.add(string_ref_descriptor("rouge-l", {{"variant", std::string("f1")}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 const Variant v = read_variant(r);
                 auto tok = text::tokenizer_from_params(r);
                 r.finish();
                 return std::make_shared<RougeLMetric>(d, std::move(sink), std::move(tok), v);
               });

  registry.add(string_ref_descriptor("chrf", {{"char_n_max", std::int64_t{6}}, {"beta", 2.0}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 ChrfParams p;
                 p.char_n_max = static_cast<int>(r.get_int("char_n_max", p.char_n_max));
                 p.beta = r.get_double("beta", p.beta);
                 const bool lower = r.get_bool("lowercase", true);
                 if (p.char_n_max < 1) r.reject("char_n_max", "must be at least 1");
                 if (!(p.beta > 0.0)) r.reject("beta", "must be positive");
                 r.finish();
                 return std::make_shared<ChrfMetric>(d, std::move(sink), lower, p);
               });

  registry.add(string_ref_descriptor("meteor", {{"alpha", 0.9}, {"beta", 3.0}, {"gamma", 0.5}}),
               [](const MetricDescriptor& d, const ParamMap& params, std::shared_ptr<WarningSink> sink) {
                 ParamReader r(d.name, params);
                 MeteorParams p;
                 p.alpha = r.get_double("alpha", p.alpha);
                 p.beta = r.get_double("beta", p.beta);
                 p.gamma = r.get_double("gamma", p.gamma);
                 if (p.alpha < 0.0 || p.alpha > 1.0) r.reject("alpha", "must be in [0, 1]");
                 if (p.gamma < 0.0 || p.gamma > 1.0) r.reject("gamma", "must be in [0, 1]");
                 if (!(p.beta > 0.0)) r.reject("beta", "must be positive");
                 auto tok = text::tokenizer_from_params(r);
                 r.finish();
                 return std::make_shared<MeteorMetric>(d, std::move(sink), std::move(tok), p);
               });
}

}  // namespace luna::metrics
