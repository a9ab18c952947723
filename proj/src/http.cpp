#include "luna/http.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "luna/core.hpp"

namespace luna::http {

Reply send(const Settings& settings, std::string_view method, std::string_view path, const std::string& body,
           const std::string& metric) {
  httplib::Headers headers;
  if (const char* token = std::getenv("LUNA_REMOTE_TOKEN"); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  auto backoff = settings.backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= settings.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(settings.base_url);
    if (!client.is_valid()) {
      throw MetricError(ErrorKind::RemoteProtocolError, metric, "invalid endpoint url '" + settings.base_url + "'");
    }
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(settings.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(settings.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    const std::string p(path);
    httplib::Result res = method == "GET" ? client.Get(p, headers)
                                          : client.Post(p, headers, body, "application/json");
    if (res) return {res->status, res->body};
    last_error = httplib::to_string(res.error());
  }
  throw MetricError(ErrorKind::RemoteProtocolError, metric,
                    settings.base_url + std::string(path) + " unreachable after " +
                        std::to_string(settings.retries + 1) + " attempt(s): " + last_error);
}

}  // namespace luna::http
