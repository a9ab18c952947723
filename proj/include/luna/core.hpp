#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace luna {

enum class Category { String, Embedding, Model };
enum class ReferenceMode { ReferenceBased, ReferenceFree };
enum class Granularity { Sentence, Corpus };

std::string_view to_string(Category c);
std::string_view to_string(ReferenceMode m);
std::string_view to_string(Granularity g);
Category parse_category(std::string_view s);
ReferenceMode parse_reference_mode(std::string_view s);
Granularity parse_granularity(std::string_view s);

using ParamValue = std::variant<bool, std::int64_t, double, std::string>;
using ParamMap = std::map<std::string, ParamValue>;

std::string param_to_string(const ParamValue& v);

/// One candidate text plus an optional reference. Reference-free metrics that
/// need a source document (coverage, density, compression, novelty) read it
/// from the reference slot.
struct EvalUnit {
  std::string candidate;
  std::optional<std::string> reference;
};

struct MetricDescriptor {
  std::string name;
  Category category = Category::String;
  ReferenceMode reference_mode = ReferenceMode::ReferenceBased;
  Granularity granularity = Granularity::Sentence;
  ParamMap params;

  bool requires_reference() const { return reference_mode == ReferenceMode::ReferenceBased; }
};

using ScoreVector = std::vector<double>;

enum class ErrorKind {
  MissingReference,
  GranularityViolation,
  EmptyInput,
  ProviderFailure,
  RemoteProtocolError,
  ConfigError,
};

std::string_view to_string(ErrorKind k);
std::optional<ErrorKind> parse_error_kind(std::string_view s);

class MetricError : public std::runtime_error {
 public:
  MetricError(ErrorKind kind, std::string metric, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& metric() const noexcept { return metric_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string metric_;
  std::string detail_;
};

/// Receives warnings raised during evaluation. Implementations must tolerate
/// concurrent calls.
class WarningSink {
 public:
  virtual ~WarningSink() = default;
  virtual void warn(std::string_view metric, std::string_view message) = 0;
};

class StderrWarningSink final : public WarningSink {
 public:
  void warn(std::string_view metric, std::string_view message) override;

 private:
  std::mutex mutex_;
};

class CollectingWarningSink final : public WarningSink {
 public:
  void warn(std::string_view metric, std::string_view message) override;
  std::vector<std::string> messages() const;
  std::size_t size() const;
  void clear();

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> messages_;
};

std::shared_ptr<WarningSink> default_warning_sink();

struct BatchOptions {
  std::size_t workers = 1;
  // Overrides the instance's sink for this call when set.
  WarningSink* sink = nullptr;
};

/// Runs fn(i) for i in [0, n) over up to `workers` threads. Each index is
/// computed independently, so the result does not depend on the worker count.
/// If any call throws, the exception from the lowest failing index is rethrown.
ScoreVector parallel_map(std::size_t n, std::size_t workers,
                         const std::function<double(std::size_t)>& fn);

/// Base of every metric. Instances are immutable after construction and may be
/// shared across threads.
class Metric {
 public:
  explicit Metric(MetricDescriptor descriptor, std::shared_ptr<WarningSink> sink = nullptr);
  virtual ~Metric() = default;

  Metric(const Metric&) = delete;
  Metric& operator=(const Metric&) = delete;

  const MetricDescriptor& descriptor() const noexcept { return descriptor_; }
  const std::string& name() const noexcept { return descriptor_.name; }
  bool requires_reference() const noexcept { return descriptor_.requires_reference(); }
  bool is_corpus() const noexcept { return descriptor_.granularity == Granularity::Corpus; }

  double evaluate_example(const EvalUnit& unit) const;

  // For corpus metrics this warns once and delegates to evaluate_corpus.
  ScoreVector evaluate_batch(std::span<const std::string> candidates,
                             std::optional<std::span<const std::string>> references,
                             const BatchOptions& options = {}) const;

  // For sentence metrics this delegates to evaluate_batch.
  ScoreVector evaluate_corpus(std::span<const std::string> candidates,
                              std::span<const std::string> references,
                              const BatchOptions& options = {}) const;

 protected:
  // Sentence metrics override score(); corpus metrics override score_corpus().
  virtual double score(const EvalUnit& unit) const;
  // Default: parallel map of score() over the units.
  virtual ScoreVector score_batch(std::span<const EvalUnit> units, const BatchOptions& options) const;
  virtual ScoreVector score_corpus(std::span<const EvalUnit> units, const BatchOptions& options) const;

  [[noreturn]] void fail(ErrorKind kind, const std::string& message) const;
  void warn(const BatchOptions& options, std::string_view message) const;

 private:
  std::vector<EvalUnit> make_units(std::span<const std::string> candidates,
                                   std::optional<std::span<const std::string>> references) const;
  ScoreVector checked(ScoreVector scores, std::size_t expected) const;

  MetricDescriptor descriptor_;
  std::shared_ptr<WarningSink> sink_;
};

using MetricPtr = std::shared_ptr<const Metric>;

/// Typed access to a ParamMap that rejects unknown keys on finish().
class ParamReader {
 public:
  ParamReader(std::string metric, const ParamMap& params);

  bool has(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  std::optional<std::string> get_optional_string(const std::string& key);
  // Marks every remaining key as consumed and returns them.
  ParamMap take_rest();
  void finish() const;

  [[noreturn]] void reject(const std::string& key, const std::string& why) const;

 private:
  const ParamValue* lookup(const std::string& key);

  std::string metric_;
  const ParamMap& params_;
  std::map<std::string, bool> used_;
};

using MetricFactory =
    std::function<MetricPtr(const MetricDescriptor&, const ParamMap&, std::shared_ptr<WarningSink>)>;

class Registry {
 public:
  // Throws ConfigError when the name is already taken.
  void add(MetricDescriptor descriptor, MetricFactory factory);
  bool contains(std::string_view name) const;
  const MetricDescriptor& descriptor(std::string_view name) const;

  // Sorted by name.
  std::vector<MetricDescriptor> list() const;

  MetricPtr init_metric(std::string_view name, const ParamMap& params = {},
                        std::shared_ptr<WarningSink> sink = nullptr) const;

 private:
  struct Entry {
    MetricDescriptor descriptor;
    MetricFactory factory;
  };
  std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace luna
