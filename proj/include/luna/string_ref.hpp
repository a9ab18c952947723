#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "luna/core.hpp"
#include "luna/text.hpp"

namespace luna::metrics {

enum class Variant { Recall, Precision, F1 };

Variant parse_variant(std::string_view s);

/// Precision/recall/F1 of an overlap count against the two totals; 0 wherever
/// a denominator is 0.
double overlap_score(std::size_t overlap, std::size_t candidate_total, std::size_t reference_total,
                     Variant variant);

/// Σ_g min(count_a(g), count_b(g)).
std::size_t clipped_overlap(const text::NGramMultiset& a, const text::NGramMultiset& b);

struct BleuParams {
  int max_n = 4;
  double smoothing_epsilon = 0.1;
};

/// Sentence BLEU with uniform weights. Orders for which the candidate has no
/// n-grams are left out and the weights renormalised over the rest; a zero
/// numerator at n >= 2 is replaced by epsilon.
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            const BleuParams& params = {});

double rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, std::size_t n,
               Variant variant = Variant::F1);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference,
               Variant variant = Variant::F1);

struct ChrfParams {
  int char_n_max = 6;
  double beta = 2.0;
};

double chrf(std::string_view candidate, std::string_view reference, const ChrfParams& params = {});

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct MeteorAlignment {
  // (candidate index, reference index), ascending by candidate index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t exact_matches = 0;
  std::size_t stem_matches = 0;
  std::size_t chunks = 0;
};

/// Exact matches first, then Porter-stem matches among the leftovers, both of
/// maximum cardinality. Among those alignments the one with fewest chunks is
/// kept, ties going to the lexicographically smallest pair list.
MeteorAlignment meteor_align(std::span<const std::string> candidate, std::span<const std::string> reference);

double meteor_score(const MeteorAlignment& alignment, std::size_t candidate_len, std::size_t reference_len,
                    const MeteorParams& params = {});

double meteor(std::span<const std::string> candidate, std::span<const std::string> reference,
              const MeteorParams& params = {});

void register_string_ref_metrics(Registry& registry);

}  // namespace luna::metrics
