#include "luna/core.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <sstream>
#include <thread>

namespace luna {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::String: return "string";
    case Category::Embedding: return "embedding";
    case Category::Model: return "model";
  }
  return "string";
}

std::string_view to_string(ReferenceMode m) {
  return m == ReferenceMode::ReferenceBased ? "reference_based" : "reference_free";
}

std::string_view to_string(Granularity g) {
  return g == Granularity::Sentence ? "sentence" : "corpus";
}

Category parse_category(std::string_view s) {
  if (s == "string") return Category::String;
  if (s == "embedding") return Category::Embedding;
  if (s == "model") return Category::Model;
  throw MetricError(ErrorKind::ConfigError, "", "unknown category '" + std::string(s) + "'");
}

ReferenceMode parse_reference_mode(std::string_view s) {
  if (s == "reference_based") return ReferenceMode::ReferenceBased;
  if (s == "reference_free") return ReferenceMode::ReferenceFree;
  throw MetricError(ErrorKind::ConfigError, "", "unknown reference_mode '" + std::string(s) + "'");
}

Granularity parse_granularity(std::string_view s) {
  if (s == "sentence") return Granularity::Sentence;
  if (s == "corpus") return Granularity::Corpus;
  throw MetricError(ErrorKind::ConfigError, "", "unknown granularity '" + std::string(s) + "'");
}

std::string param_to_string(const ParamValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else {
          std::ostringstream os;
          os.precision(17);
          os << x;
          return os.str();
        }
      },
      v);
}

std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingReference: return "MissingReference";
    case ErrorKind::GranularityViolation: return "GranularityViolation";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::ProviderFailure: return "ProviderFailure";
    case ErrorKind::RemoteProtocolError: return "RemoteProtocolError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "ConfigError";
}

std::optional<ErrorKind> parse_error_kind(std::string_view s) {
  for (auto k : {ErrorKind::MissingReference, ErrorKind::GranularityViolation, ErrorKind::EmptyInput,
                 ErrorKind::ProviderFailure, ErrorKind::RemoteProtocolError, ErrorKind::ConfigError}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

namespace {
std::string format_error(ErrorKind kind, const std::string& metric, const std::string& message) {
  std::string out(to_string(kind));
  if (!metric.empty()) out += " [" + metric + "]";
  out += ": " + message;
  return out;
}
}  // namespace

MetricError::MetricError(ErrorKind kind, std::string metric, const std::string& message)
    : std::runtime_error(format_error(kind, metric, message)),
      kind_(kind),
      metric_(std::move(metric)),
      detail_(message) {}

void StderrWarningSink::warn(std::string_view metric, std::string_view message) {
  std::lock_guard lock(mutex_);
  std::cerr << "Warning [" << metric << "]: " << message << '\n';
}

void CollectingWarningSink::warn(std::string_view metric, std::string_view message) {
  std::lock_guard lock(mutex_);
  messages_.push_back(std::string(metric) + ": " + std::string(message));
}

std::vector<std::string> CollectingWarningSink::messages() const {
  std::lock_guard lock(mutex_);
  return messages_;
}

std::size_t CollectingWarningSink::size() const {
  std::lock_guard lock(mutex_);
  return messages_.size();
}

void CollectingWarningSink::clear() {
  std::lock_guard lock(mutex_);
  messages_.clear();
}

std::shared_ptr<WarningSink> default_warning_sink() {
  static auto sink = std::make_shared<StderrWarningSink>();
  return sink;
}

ScoreVector parallel_map(std::size_t n, std::size_t workers,
                         const std::function<double(std::size_t)>& fn) {
  ScoreVector out(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    run_range(0, n);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(n, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(run_range, begin, end);
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

Metric::Metric(MetricDescriptor descriptor, std::shared_ptr<WarningSink> sink)
    : descriptor_(std::move(descriptor)), sink_(sink ? std::move(sink) : default_warning_sink()) {}

void Metric::fail(ErrorKind kind, const std::string& message) const {
  throw MetricError(kind, descriptor_.name, message);
}

void Metric::warn(const BatchOptions& options, std::string_view message) const {
  WarningSink* sink = options.sink ? options.sink : sink_.get();
  sink->warn(descriptor_.name, message);
}

double Metric::score(const EvalUnit&) const {
  fail(ErrorKind::GranularityViolation, "metric does not score single units");
}

ScoreVector Metric::score_batch(std::span<const EvalUnit> units, const BatchOptions& options) const {
  return parallel_map(units.size(), options.workers, [&](std::size_t i) { return score(units[i]); });
}

ScoreVector Metric::score_corpus(std::span<const EvalUnit> units, const BatchOptions& options) const {
  return score_batch(units, options);
}

ScoreVector Metric::checked(ScoreVector scores, std::size_t expected) const {
  if (scores.size() != expected) {
    fail(ErrorKind::ProviderFailure, "produced " + std::to_string(scores.size()) + " scores for " +
                                         std::to_string(expected) + " units");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorKind::ProviderFailure, "produced a non-finite score");
  }
  return scores;
}

std::vector<EvalUnit> Metric::make_units(std::span<const std::string> candidates,
                                         std::optional<std::span<const std::string>> references) const {
  if (references && references->size() != candidates.size()) {
    fail(ErrorKind::ConfigError, "got " + std::to_string(candidates.size()) + " candidates but " +
                                     std::to_string(references->size()) + " references");
  }
  if (!references && requires_reference() && !candidates.empty()) {
    fail(ErrorKind::MissingReference, "references are required");
  }
  std::vector<EvalUnit> units;
  units.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    EvalUnit u{candidates[i], std::nullopt};
    if (references) u.reference = (*references)[i];
    units.push_back(std::move(u));
  }
  return units;
}

double Metric::evaluate_example(const EvalUnit& unit) const {
  if (is_corpus()) {
    fail(ErrorKind::GranularityViolation,
         "separate examples evaluation is not supported for corpus-level metrics");
  }
  if (requires_reference() && !unit.reference) fail(ErrorKind::MissingReference, "reference is required");
  const double s = score(unit);
  if (!std::isfinite(s)) fail(ErrorKind::ProviderFailure, "produced a non-finite score");
  return s;
}

ScoreVector Metric::evaluate_batch(std::span<const std::string> candidates,
                                   std::optional<std::span<const std::string>> references,
                                   const BatchOptions& options) const {
  auto units = make_units(candidates, references);
  if (is_corpus()) {
    warn(options, "batch processing is considered as processing the textual corpus");
    return checked(score_corpus(units, options), units.size());
  }
  return checked(score_batch(units, options), units.size());
}

ScoreVector Metric::evaluate_corpus(std::span<const std::string> candidates,
                                    std::span<const std::string> references,
                                    const BatchOptions& options) const {
  // An empty reference list stands for "no references" on reference-free metrics.
  std::optional<std::span<const std::string>> refs = references;
  if (references.empty() && !candidates.empty() && !requires_reference()) refs.reset();
  if (!is_corpus()) return evaluate_batch(candidates, refs, options);
  auto units = make_units(candidates, refs);
  return checked(score_corpus(units, options), units.size());
}

}  // namespace luna
