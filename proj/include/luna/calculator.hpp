#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "luna/core.hpp"

namespace luna {

struct CalculationResult {
  std::map<std::string, ScoreVector> per_metric;
  std::map<std::string, std::chrono::nanoseconds> timings;
  // Metric warnings followed by one entry per failed metric, in request order.
  std::vector<std::string> warnings;
  // Result key -> error text, for metrics omitted from per_metric.
  std::map<std::string, std::string> failures;
  // Result keys in request order.
  std::vector<std::string> keys;
};

struct CalculateOptions {
  // Run each metric on its own thread.
  bool execute_parallel = false;
  // Passed to every evaluate_batch call.
  std::size_t workers = 1;
};

/// Runs every metric over the same inputs. References, when given, are handed
/// to every metric; reference-free metrics that have no use for them ignore
/// them. A metric that throws is left out of per_metric and reported in
/// warnings and failures.
///
/// Throws ConfigError for an empty metric list or mismatched lengths, and
/// MissingReference up front when references are absent but some metric
/// requires them.
CalculationResult calculate(std::span<const MetricPtr> metrics, std::span<const std::string> candidates,
                            std::optional<std::span<const std::string>> references,
                            const CalculateOptions& options = {});

/// Result keys: registry names, with repeats suffixed "-2", "-3", ...
std::vector<std::string> result_keys(std::span<const MetricPtr> metrics);

}  // namespace luna
