#include "luna/embeddings.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json_util.hpp"

namespace luna::embed {

using nlohmann::json;

UnknownPolicy parse_unknown_policy(std::string_view s) {
  if (s == "zero_vector") return UnknownPolicy::ZeroVector;
  if (s == "skip_token") return UnknownPolicy::SkipToken;
  throw MetricError(ErrorKind::ConfigError, "", "unknown_policy must be zero_vector or skip_token");
}

bool VectorTable::add(std::string token, std::vector<double> vec) {
  if (vec.size() != dim_) {
    throw MetricError(ErrorKind::ConfigError, "", "vector for '" + token + "' has " + std::to_string(vec.size()) +
                                                      " components, expected " + std::to_string(dim_));
  }
  if (table_.contains(token)) return false;
  order_.push_back(token);
  table_.emplace(std::move(token), std::move(vec));
  return true;
}

const std::vector<double>* VectorTable::find(std::string_view token) const {
  auto it = table_.find(std::string(token));
  return it == table_.end() ? nullptr : &it->second;
}

bool operator==(const VectorTable& a, const VectorTable& b) {
  return a.dim_ == b.dim_ && a.order_ == b.order_ && a.table_ == b.table_;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_size(std::string_view s, std::size_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void bad_file(const std::filesystem::path& path, std::size_t line_no, const std::string& why) {
  throw MetricError(ErrorKind::ConfigError, "",
                    path.string() + (line_no ? ":" + std::to_string(line_no) : std::string()) + ": " + why);
}

}  // namespace

VectorTable load_static_vectors(const std::filesystem::path& path, std::optional<std::size_t> expected_dim,
                                WarningSink* sink) {
  std::ifstream in(path);
  if (!in) bad_file(path, 0, "cannot open vector file");

  std::optional<std::size_t> dim = expected_dim;
  std::optional<std::size_t> declared_count;
  std::optional<VectorTable> table;
  std::string line;
  std::size_t line_no = 0;
  std::size_t duplicates = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;

    std::size_t count = 0, header_dim = 0;
    if (line_no == 1 && fields.size() == 2 && parse_size(fields[0], count) && parse_size(fields[1], header_dim)) {
      if (dim && *dim != header_dim) {
        bad_file(path, line_no, "header declares dim " + std::to_string(header_dim) + ", expected " +
                                    std::to_string(*dim));
      }
      dim = header_dim;
      declared_count = count;
      continue;
    }

    if (fields.size() < 2) bad_file(path, line_no, "entry has no vector components");
    const std::size_t n = fields.size() - 1;
    if (!dim) dim = n;
    if (n != *dim) {
      bad_file(path, line_no, "entry has " + std::to_string(n) + " components, expected " + std::to_string(*dim));
    }
    if (!table) table.emplace(*dim);

    std::vector<double> vec(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (!parse_double(fields[k + 1], vec[k]) || !std::isfinite(vec[k])) {
        bad_file(path, line_no, "malformed component '" + std::string(fields[k + 1]) + "'");
      }
    }
    if (!table->add(std::string(fields[0]), std::move(vec))) {
      ++duplicates;
      if (sink) {
        sink->warn("vectors", path.string() + ":" + std::to_string(line_no) + ": duplicate token '" +
                                  std::string(fields[0]) + "' ignored, keeping the first vector");
      }
    }
  }
  if (!table || table->size() == 0) bad_file(path, 0, "no vectors found");
  if (declared_count && *declared_count != table->size() + duplicates && sink) {
    sink->warn("vectors", path.string() + ": header declares " + std::to_string(*declared_count) +
                              " entries, found " + std::to_string(table->size() + duplicates));
  }
  return std::move(*table);
}

void write_static_vectors(const VectorTable& table, const std::filesystem::path& path, bool header) {
  std::ofstream out(path);
  if (!out) throw MetricError(ErrorKind::ConfigError, "", "cannot write " + path.string());
  if (header) out << table.size() << ' ' << table.dim() << '\n';
  char buf[64];
  for (const auto& tok : table.tokens()) {
    out << tok;
    for (double x : *table.find(tok)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

void normalize_rows(EmbeddingMatrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    double sq = 0.0;
    for (double x : r) sq += x * x;
    if (sq > 0.0) {
      const double norm = std::sqrt(sq);
      for (double& x : r) x /= norm;
    }
  }
  m.normalized = true;
}

EmbeddingMatrix embed_static(std::span<const std::string> tokens, const VectorTable& table, UnknownPolicy policy,
                             bool normalize) {
  EmbeddingMatrix m;
  m.dim = table.dim();
  m.data.reserve(tokens.size() * m.dim);
  for (const auto& tok : tokens) {
    const auto* vec = table.find(tok);
    if (!vec) {
      if (policy == UnknownPolicy::SkipToken) continue;
      m.data.insert(m.data.end(), m.dim, 0.0);
    } else {
      m.data.insert(m.data.end(), vec->begin(), vec->end());
    }
    m.tokens.push_back(tok);
  }
  if (normalize) normalize_rows(m);
  return m;
}

IdfTable::IdfTable(std::size_t doc_count, std::map<std::string, double> idf)
    : doc_count_(doc_count), idf_(std::move(idf)), default_idf_(std::log(static_cast<double>(doc_count) + 1.0)) {}

double IdfTable::weight(const std::string& token) const {
  auto it = idf_.find(token);
  return it == idf_.end() ? default_idf_ : it->second;
}

IdfTable build_idf(std::span<const std::vector<std::string>> corpus) {
  if (corpus.empty()) throw MetricError(ErrorKind::ConfigError, "", "IDF corpus is empty");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    for (const auto& tok : std::set<std::string>(doc.begin(), doc.end())) ++df[tok];
  }
  const double n1 = static_cast<double>(corpus.size()) + 1.0;
  std::map<std::string, double> idf;
  for (const auto& [tok, count] : df) idf.emplace(tok, std::log(n1 / (static_cast<double>(count) + 1.0)));
  return IdfTable(corpus.size(), std::move(idf));
}

std::vector<EmbeddingMatrix> OneHotProvider::embed(std::span<const std::string> texts) const {
  std::vector<std::vector<std::string>> toks;
  std::set<std::string> vocab;
  for (const auto& t : texts) {
    toks.push_back(text::tokenize(t, tok_).tokens);
    vocab.insert(toks.back().begin(), toks.back().end());
  }
  std::map<std::string, std::size_t> rank;
  for (const auto& w : vocab) rank.emplace(w, rank.size());

  const std::size_t dim = std::max<std::size_t>(vocab.size(), 1);
  std::vector<EmbeddingMatrix> out;
  out.reserve(texts.size());
  for (auto& seq : toks) {
    EmbeddingMatrix m;
    m.dim = dim;
    m.data.assign(seq.size() * dim, 0.0);
    for (std::size_t i = 0; i < seq.size(); ++i) m.data[i * dim + rank.at(seq[i])] = 1.0;
    m.tokens = std::move(seq);
    m.normalized = true;
    out.push_back(std::move(m));
  }
  return out;
}

StaticProvider::StaticProvider(std::shared_ptr<const VectorTable> table, UnknownPolicy policy,
                               text::TokenizerConfig tok)
    : table_(std::move(table)), policy_(policy), tok_(std::move(tok)) {}

std::vector<EmbeddingMatrix> StaticProvider::embed(std::span<const std::string> texts) const {
  std::vector<EmbeddingMatrix> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    out.push_back(embed_static(text::tokenize(t, tok_).tokens, *table_, policy_, false));
  }
  return out;
}

namespace {

[[noreturn]] void protocol_error(const std::string& why) {
  throw MetricError(ErrorKind::RemoteProtocolError, "embed", why);
}

}  // namespace

std::vector<EmbeddingMatrix> fetch_contextual(std::span<const std::string> texts,
                                              const EmbeddingEndpointConfig& endpoint) {
  if (texts.empty()) return {};
  json request = {{"texts", json::array()}, {"params", detail::to_json(endpoint.params)}};
  for (const auto& t : texts) request["texts"].push_back(t);

  const auto reply = http::send(endpoint.http, "POST", "/embed", request.dump(), "embed");
  if (reply.status != 200) {
    std::string message = "HTTP " + std::to_string(reply.status);
    const auto body = json::parse(reply.body, nullptr, false);
    if (body.is_object() && body.contains("error") && body["error"].is_object() &&
        body["error"].value("message", json()).is_string()) {
      message += ": " + body["error"]["message"].get<std::string>();
    }
    protocol_error(message);
  }

  const auto body = json::parse(reply.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) protocol_error("response is not a JSON object");
  if (!body.contains("tokens") || !body["tokens"].is_array() || !body.contains("vectors") ||
      !body["vectors"].is_array() || !body.contains("dim") || !body["dim"].is_number_unsigned()) {
    protocol_error("response lacks tokens/vectors/dim");
  }
  const auto dim = body["dim"].get<std::size_t>();
  const auto& tokens = body["tokens"];
  const auto& vectors = body["vectors"];
  if (dim == 0) protocol_error("dim must be positive");
  if (tokens.size() != texts.size() || vectors.size() != texts.size()) {
    protocol_error("expected " + std::to_string(texts.size()) + " entries, got " + std::to_string(tokens.size()) +
                   " token lists and " + std::to_string(vectors.size()) + " vector lists");
  }

  std::vector<EmbeddingMatrix> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!tokens[i].is_array() || !vectors[i].is_array() || tokens[i].size() != vectors[i].size()) {
      protocol_error("entry " + std::to_string(i) + ": tokens and vectors are not aligned");
    }
    EmbeddingMatrix m;
    m.dim = dim;
    m.data.reserve(tokens[i].size() * dim);
    for (std::size_t r = 0; r < tokens[i].size(); ++r) {
      if (!tokens[i][r].is_string()) protocol_error("entry " + std::to_string(i) + ": token is not a string");
      const auto& vec = vectors[i][r];
      if (!vec.is_array() || vec.size() != dim) {
        protocol_error("entry " + std::to_string(i) + ": vector " + std::to_string(r) + " does not have dim " +
                       std::to_string(dim));
      }
      for (const auto& x : vec) {
        if (!x.is_number()) protocol_error("entry " + std::to_string(i) + ": non-numeric vector component");
        m.data.push_back(x.get<double>());
      }
      m.tokens.push_back(tokens[i][r].get<std::string>());
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<EmbeddingMatrix> HttpEmbeddingProvider::embed(std::span<const std::string> texts) const {
  return fetch_contextual(texts, config_);
}

}  // namespace luna::embed
