#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "luna/core.hpp"
#include "luna/http.hpp"

namespace luna::remote {

struct RemoteMetricConfig {
  // Registry name (lowercase, hyphenated).
  std::string name;
  // Name sent in the request body; defaults to `name`.
  std::string remote_name;
  http::Settings http;
  // Unset fields are filled from /info at init time, or from the built-in
  // taxonomy for well-known metric names when probing is disabled.
  std::optional<Category> category;
  std::optional<ReferenceMode> reference_mode;
  std::optional<Granularity> granularity;
  // Call GET /info when an instance is created.
  bool probe = true;
  // Forwarded unchanged in every request (e.g. lang, score_to_return).
  ParamMap params;
};

struct Taxonomy {
  Category category;
  ReferenceMode reference_mode;
  Granularity granularity;
};

/// Placement of the model-hosted metrics the toolkit knows by name: s3,
/// summaqa, infolm, blanc, bartscore, bary-score, depth-score.
std::optional<Taxonomy> known_taxonomy(std::string_view name);

/// GET /info -> {name, granularity, reference_mode, params_schema}.
MetricDescriptor remote_info(const RemoteMetricConfig& config);

/// POST /evaluate. Transport failures are retried; application errors (HTTP
/// 422) come back as ProviderFailure; everything else malformed is a
/// RemoteProtocolError.
ScoreVector remote_evaluate(const RemoteMetricConfig& config, std::span<const std::string> candidates,
                            std::optional<std::span<const std::string>> references);

/// Adds a registry entry whose instances talk to the endpoint. Parameters given
/// to init_metric may override base_url, timeout_ms, retries, backoff_ms and
/// probe; all other keys are forwarded to the endpoint.
void register_remote_metric(Registry& registry, RemoteMetricConfig config);

/// Registration file: {"remote_metrics": [{"name", "base_url", ...}]} or a bare
/// array of those objects.
std::vector<RemoteMetricConfig> load_registrations(const std::filesystem::path& path);

}  // namespace luna::remote
