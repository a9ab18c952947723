#include "luna/calculator.hpp"

#include <set>
#include <thread>

namespace luna {

std::vector<std::string> result_keys(std::span<const MetricPtr> metrics) {
  std::vector<std::string> keys;
  std::set<std::string> taken;
  for (const auto& m : metrics) {
    const std::string& base = m->name();
    std::string key = base;
    for (int k = 2; taken.count(key); ++k) key = base + "-" + std::to_string(k);
    taken.insert(key);
    keys.push_back(key);
  }
  return keys;
}

namespace {

struct Outcome {
  std::optional<ScoreVector> scores;
  std::string error;
  std::vector<std::string> warnings;
  std::chrono::nanoseconds elapsed{0};
};

Outcome run_one(const Metric& metric, std::span<const std::string> candidates,
                std::optional<std::span<const std::string>> references, std::size_t workers) {
  Outcome out;
  CollectingWarningSink sink;
  BatchOptions options{workers, &sink};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    out.scores = metric.evaluate_batch(candidates, references, options);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.elapsed = std::chrono::steady_clock::now() - t0;
  out.warnings = sink.messages();
  return out;
}

}  // namespace

CalculationResult calculate(std::span<const MetricPtr> metrics, std::span<const std::string> candidates,
                            std::optional<std::span<const std::string>> references,
                            const CalculateOptions& options) {
  if (metrics.empty()) throw MetricError(ErrorKind::ConfigError, "", "no metrics requested");
  for (const auto& m : metrics) {
    if (!m) throw MetricError(ErrorKind::ConfigError, "", "null metric instance");
  }
  if (references && references->size() != candidates.size()) {
    throw MetricError(ErrorKind::ConfigError, "",
                      std::to_string(candidates.size()) + " candidates but " + std::to_string(references->size()) +
                          " references");
  }
  if (!references) {
    for (const auto& m : metrics) {
      if (m->requires_reference()) {
        throw MetricError(ErrorKind::MissingReference, m->name(), "references are required but none were given");
      }
    }
  }

  std::vector<Outcome> outcomes(metrics.size());
  if (options.execute_parallel && metrics.size() > 1) {
    std::vector<std::jthread> pool;
    pool.reserve(metrics.size());
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      pool.emplace_back([&, i] { outcomes[i] = run_one(*metrics[i], candidates, references, options.workers); });
    }
  } else {
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      outcomes[i] = run_one(*metrics[i], candidates, references, options.workers);
    }
  }

  CalculationResult result;
  result.keys = result_keys(metrics);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    auto& o = outcomes[i];
    const auto& key = result.keys[i];
    for (auto& w : o.warnings) result.warnings.push_back(std::move(w));
    result.timings[key] = o.elapsed;
    if (o.scores) {
      result.per_metric[key] = std::move(*o.scores);
    } else {
      result.warnings.push_back(key + " failed: " + o.error);
      result.failures[key] = o.error;
    }
  }
  return result;
}

}  // namespace luna
