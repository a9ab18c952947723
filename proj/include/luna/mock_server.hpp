#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "luna/core.hpp"

namespace luna::remote {

enum class MockProfile { LenRatio, EchoParam, SummaQaCorpus, ItemHash };

std::string_view to_string(MockProfile p);
MockProfile parse_mock_profile(std::string_view s);

/// Score the item_hash profile gives a candidate: FNV-1a of its bytes folded
/// into [0, 1).
double item_hash_score(std::string_view candidate);

struct MockOptions {
  MockProfile profile = MockProfile::LenRatio;
  // Reported by /info; defaults to the profile's own metric name.
  std::optional<std::string> name;
  // Server-side defaults merged under each request's params.
  ParamMap params;

  // Fault injection for /evaluate.
  int stall_first = 0;  // the first N requests sleep before answering
  std::chrono::milliseconds stall{0};
  // Replaces the response when it returns a value: (status, body).
  std::function<std::optional<std::pair<int, std::string>>(std::string_view path, const std::string& body)>
      override_reply;
};

/// A deterministic /evaluate, /info and /embed endpoint served on a background
/// thread. /embed returns one-hot vectors over the request's sorted vocabulary.
class MockServer {
 public:
  explicit MockServer(MockOptions options = {});
  ~MockServer();

  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Port 0 picks a free port. Throws ConfigError when the port is taken.
  void start(int port = 0, const std::string& host = "127.0.0.1");
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

  int port() const noexcept { return port_; }
  std::string base_url() const;

  int evaluate_requests() const noexcept { return evaluate_requests_.load(); }
  int info_requests() const noexcept { return info_requests_.load(); }
  std::string last_authorization() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  MockOptions options_;
  int port_ = 0;
  std::atomic<int> evaluate_requests_{0};
  std::atomic<int> info_requests_{0};
};

}  // namespace luna::remote
