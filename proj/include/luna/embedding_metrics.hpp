#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>

#include "luna/core.hpp"
#include "luna/embeddings.hpp"
#include "luna/string_ref.hpp"
#include "luna/transport.hpp"

namespace luna::metrics {

struct MatchScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Each token takes its best cosine partner on the other side; the per-side
/// means (idf-weighted when a table is given) are precision and recall.
MatchScores greedy_max_sim(const embed::EmbeddingMatrix& candidate, const embed::EmbeddingMatrix& reference,
                           const embed::IdfTable* idf = nullptr);

struct RougeWeParams {
  std::size_t n = 1;
  double threshold = 0.8;
  Variant variant = Variant::F1;
  embed::UnknownPolicy unknown = embed::UnknownPolicy::ZeroVector;
};

/// Soft n-gram overlap: an n-gram is the normalised mean of its member
/// vectors, and pairs at or above the cosine threshold are matched one-to-one
/// in order of decreasing similarity.
double rouge_we(std::span<const std::string> candidate, std::span<const std::string> reference,
                const embed::VectorTable& table, const RougeWeParams& params = {});

struct MoverParams {
  std::size_t n_gram = 1;
  std::size_t exact_cap = 64;
  transport::SinkhornOptions sinkhorn;
};

/// Word mover's distance between the normalised n-gram clouds of the two
/// texts, mapped to 1 / (1 + WMD). Either side empty gives 0.
double moverscore(const embed::EmbeddingMatrix& candidate, const embed::EmbeddingMatrix& reference,
                  const MoverParams& params = {}, const embed::IdfTable* idf = nullptr);

void register_embedding_metrics(Registry& registry);

}  // namespace luna::metrics
