#include "luna/string_free.hpp"


namespace luna::metrics {

std::size_t FragmentSet::covered() const {
  std::size_t sum = 0;
  for (const auto& f : fragments) sum += f.length;
  return sum;
}

std::size_t FragmentSet::squared_lengths() const {
  std::size_t sum = 0;
  for (const auto& f : fragments) sum += f.length * f.length;
  return sum;
}

FragmentSet extractive_fragments(std::span<const std::string> article, std::span<const std::string> summary) {
  FragmentSet out;
  out.article_len = article.size();
  out.summary_len = summary.size();

  // run[j] = length of the common run starting at article[j] and summary[i],
  // rebuilt right-to-left per summary position from the row for i + 1.
  const std::size_t a = article.size();
  const std::size_t s = summary.size();
  std::vector<std::vector<std::size_t>> run(s + 1, std::vector<std::size_t>(a + 1, 0));
  for (std::size_t i = s; i-- > 0;) {
    for (std::size_t j = a; j-- > 0;) {
      run[i][j] = summary[i] == article[j] ? run[i + 1][j + 1] + 1 : 0;
    }
  }

  std::size_t i = 0;
  while (i < s) {
    std::size_t best_len = 0;
    std::size_t best_start = 0;
    for (std::size_t j = 0; j < a; ++j) {
      if (run[i][j] > best_len) {
        best_len = run[i][j];
        best_start = j;
      }
    }
    if (best_len > 0) {
      out.fragments.push_back({best_start, i, best_len});
      i += best_len;
    } else {
      ++i;
    }
  }
  return out;
}

double coverage(const FragmentSet& f) {
  if (f.summary_len == 0) return 0.0;
  return static_cast<double>(f.covered()) / static_cast<double>(f.summary_len);
}

double density(const FragmentSet& f) {
  if (f.summary_len == 0) return 0.0;
  return static_cast<double>(f.squared_lengths()) / static_cast<double>(f.summary_len);
}

double compression(const FragmentSet& f) {
  if (f.summary_len == 0) throw MetricError(ErrorKind::EmptyInput, "compression", "summary has no tokens");
  return static_cast<double>(f.article_len) / static_cast<double>(f.summary_len);
}

double novelty(std::span<const std::string> candidate, std::span<const std::string> source, std::size_t n) {
  const auto cand = text::word_ngrams(candidate, n);
  if (cand.counts.empty()) return 0.0;
  const auto src = text::word_ngrams(source, n);
  std::size_t novel = 0;
  for (const auto& [g, c] : cand.counts) {
    if (!src.counts.contains(g)) ++novel;
  }
  return static_cast<double>(novel) / static_cast<double>(cand.distinct());
}

double repetition(std::span<const std::string> candidate, std::size_t n) {
  const auto cand = text::word_ngrams(candidate, n);
  const std::size_t total = cand.total();
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(cand.distinct()) / static_cast<double>(total);
}

namespace {

enum class FreeKind { Coverage, Density, Compression, Length, Novelty, Repetition };

bool uses_source(FreeKind k) {
  return k == FreeKind::Coverage || k == FreeKind::Density || k == FreeKind::Compression ||
         k == FreeKind::Novelty;
}

class ReferenceFreeMetric final : public Metric {
 public:
  ReferenceFreeMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, FreeKind kind, std::size_t n,
                      bool tokenize, text::TokenizerConfig tok)
      : Metric(std::move(d), std::move(sink)), kind_(kind), n_(n), tokenize_(tokenize), tok_(std::move(tok)) {}

 protected:
  double score(const EvalUnit& u) const override {
    const auto cand = tokens(u.candidate);
    if (kind_ == FreeKind::Length) return static_cast<double>(cand.size());
    if (kind_ == FreeKind::Repetition) return repetition(cand, n_);

    if (!u.reference) fail(ErrorKind::MissingReference, "the source document travels in the reference slot");
    const auto source = tokens(*u.reference);
    if (kind_ == FreeKind::Novelty) return novelty(cand, source, n_);

    const auto fragments = extractive_fragments(source, cand);
    if (kind_ == FreeKind::Coverage) return coverage(fragments);
    if (kind_ == FreeKind::Density) return density(fragments);
    if (fragments.summary_len == 0) fail(ErrorKind::EmptyInput, "summary has no tokens");
    return compression(fragments);
  }

 private:
  std::vector<std::string> tokens(const std::string& s) const {
    if (tokenize_) return text::tokenize(s, tok_).tokens;
    return text::tokenize(s, text::TokenizerConfig{false, false, std::nullopt, false}).tokens;
  }

  FreeKind kind_;
  std::size_t n_;
  // false: plain whitespace split, no case folding
  bool tokenize_;
  text::TokenizerConfig tok_;
};

}  // namespace

void register_string_free_metrics(Registry& registry) {
  const std::pair<const char*, FreeKind> kinds[] = {
      {"coverage", FreeKind::Coverage}, {"density", FreeKind::Density},   {"compression", FreeKind::Compression},
      {"length", FreeKind::Length},     {"novelty", FreeKind::Novelty},   {"repetition", FreeKind::Repetition},
  };
  for (const auto& [name, kind] : kinds) {
    ParamMap defaults{{"n_gram", std::int64_t{3}}, {"tokenize", true}};
    defaults["uses_source"] = uses_source(kind);
    MetricDescriptor d{name, Category::String, ReferenceMode::ReferenceFree, Granularity::Sentence, defaults};
    registry.add(std::move(d), [kind](const MetricDescriptor& desc, const ParamMap& params,
                                      std::shared_ptr<WarningSink> sink) {
      ParamReader r(desc.name, params);
      const auto n = r.get_int("n_gram", 3);
      if (n < 1) r.reject("n_gram", "must be at least 1");
      const bool tokenize = r.get_bool("tokenize", true);
      auto tok = text::tokenizer_from_params(r);
      r.finish();
      return std::make_shared<ReferenceFreeMetric>(desc, std::move(sink), kind, static_cast<std::size_t>(n),
                                                   tokenize, std::move(tok));
    });
  }
}

}  // namespace luna::metrics
