#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "luna/core.hpp"
#include "luna/http.hpp"
#include "luna/text.hpp"

namespace luna::embed {

enum class UnknownPolicy { ZeroVector, SkipToken };

UnknownPolicy parse_unknown_policy(std::string_view s);

/// Static token -> vector lookup. Insertion order is kept for serialisation.
class VectorTable {
 public:
  explicit VectorTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return order_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return order_; }

  // Returns false (and keeps the first vector) when the token already exists.
  bool add(std::string token, std::vector<double> vec);
  const std::vector<double>* find(std::string_view token) const;

  friend bool operator==(const VectorTable& a, const VectorTable& b);

 private:
  std::size_t dim_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

/// Text format: one `token f1 f2 ...` entry per line, optionally preceded by a
/// `count dim` header. Duplicate tokens keep the first vector and warn.
VectorTable load_static_vectors(const std::filesystem::path& path, std::optional<std::size_t> expected_dim = {},
                                WarningSink* sink = nullptr);
void write_static_vectors(const VectorTable& table, const std::filesystem::path& path, bool header = true);

/// Row-major token embeddings.
struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::vector<std::string> tokens;
  std::vector<double> data;
  bool normalized = false;

  std::size_t rows() const noexcept { return tokens.size(); }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

// Zero rows stay zero.
void normalize_rows(EmbeddingMatrix& m);

EmbeddingMatrix embed_static(std::span<const std::string> tokens, const VectorTable& table, UnknownPolicy policy,
                             bool normalize);

class IdfTable {
 public:
  IdfTable() = default;
  IdfTable(std::size_t doc_count, std::map<std::string, double> idf);

  std::size_t doc_count() const noexcept { return doc_count_; }
  double default_idf() const noexcept { return default_idf_; }
  double weight(const std::string& token) const;
  const std::map<std::string, double>& entries() const noexcept { return idf_; }

 private:
  std::size_t doc_count_ = 0;
  std::map<std::string, double> idf_;
  double default_idf_ = 0.0;
};

/// idf(w) = ln((N + 1) / (df(w) + 1)), unseen tokens get ln(N + 1).
IdfTable build_idf(std::span<const std::vector<std::string>> corpus);

/// Source of per-token vectors for a batch of texts. Implementations choose
/// their own tokenisation and report it in EmbeddingMatrix::tokens.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<EmbeddingMatrix> embed(std::span<const std::string> texts) const = 0;
};

/// Deterministic lexical provider: tokens come from the default tokenizer and
/// each one maps to the one-hot vector of its rank in the sorted vocabulary of
/// the whole request.
class OneHotProvider final : public EmbeddingProvider {
 public:
  explicit OneHotProvider(text::TokenizerConfig tok = {}) : tok_(std::move(tok)) {}
  std::vector<EmbeddingMatrix> embed(std::span<const std::string> texts) const override;

 private:
  text::TokenizerConfig tok_;
};

class StaticProvider final : public EmbeddingProvider {
 public:
  StaticProvider(std::shared_ptr<const VectorTable> table, UnknownPolicy policy, text::TokenizerConfig tok = {});
  std::vector<EmbeddingMatrix> embed(std::span<const std::string> texts) const override;

 private:
  std::shared_ptr<const VectorTable> table_;
  UnknownPolicy policy_;
  text::TokenizerConfig tok_;
};

struct EmbeddingEndpointConfig {
  http::Settings http;
  // Passed through to the provider unchanged (model name, layer, ...).
  ParamMap params;
};

/// POST /embed {"texts": [...], "params": {...}} -> {"tokens", "vectors", "dim"}.
std::vector<EmbeddingMatrix> fetch_contextual(std::span<const std::string> texts,
                                              const EmbeddingEndpointConfig& endpoint);

class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(EmbeddingEndpointConfig config) : config_(std::move(config)) {}
  std::vector<EmbeddingMatrix> embed(std::span<const std::string> texts) const override;

 private:
  EmbeddingEndpointConfig config_;
};

}  // namespace luna::embed
