#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace luna::http {

struct Settings {
  std::string base_url;
  std::chrono::milliseconds timeout{30'000};
  int retries = 2;
  // Doubles after every failed attempt.
  std::chrono::milliseconds backoff{500};
};

struct Reply {
  int status = 0;
  std::string body;
};

/// Sends one request, retrying only when no HTTP response arrives at all.
/// Adds `Authorization: Bearer $LUNA_REMOTE_TOKEN` when that variable is set.
/// Throws MetricError(RemoteProtocolError) once every attempt has failed.
Reply send(const Settings& settings, std::string_view method, std::string_view path, const std::string& body,
           const std::string& metric);

}  // namespace luna::http
