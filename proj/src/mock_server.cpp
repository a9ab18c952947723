#include "luna/mock_server.hpp"

#include <httplib.h>
#include <sys/socket.h>

#include <algorithm>
#include <mutex>
#include <set>
#include <thread>

#include "json_util.hpp"
#include "luna/embeddings.hpp"
#include "luna/text.hpp"

namespace luna::remote {

using nlohmann::json;

std::string_view to_string(MockProfile p) {
  switch (p) {
    case MockProfile::LenRatio: return "len_ratio";
    case MockProfile::EchoParam: return "echo_param";
    case MockProfile::SummaQaCorpus: return "summaqa_corpus";
    case MockProfile::ItemHash: return "item_hash";
  }
  return "len_ratio";
}

MockProfile parse_mock_profile(std::string_view s) {
  for (auto p : {MockProfile::LenRatio, MockProfile::EchoParam, MockProfile::SummaQaCorpus, MockProfile::ItemHash}) {
    if (to_string(p) == s) return p;
  }
  throw MetricError(ErrorKind::ConfigError, "", "unknown mock profile '" + std::string(s) + "'");
}

double item_hash_score(std::string_view candidate) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : candidate) {
    h ^= c;
    h *= 1099511628211ull;
  }
  constexpr std::uint64_t kMod = 1000003;
  return static_cast<double>(h % kMod) / static_cast<double>(kMod);
}

namespace {

struct ProfileInfo {
  const char* name;
  Granularity granularity;
  ReferenceMode reference_mode;
};

ProfileInfo info_for(MockProfile p) {
  switch (p) {
    case MockProfile::LenRatio: return {"len-ratio", Granularity::Sentence, ReferenceMode::ReferenceBased};
    case MockProfile::EchoParam: return {"echo-param", Granularity::Sentence, ReferenceMode::ReferenceFree};
    case MockProfile::SummaQaCorpus: return {"summaqa", Granularity::Corpus, ReferenceMode::ReferenceBased};
    case MockProfile::ItemHash: return {"item-hash", Granularity::Sentence, ReferenceMode::ReferenceFree};
  }
  return {"len-ratio", Granularity::Sentence, ReferenceMode::ReferenceBased};
}

json params_schema(MockProfile p) {
  switch (p) {
    case MockProfile::EchoParam: return {{"value", "real"}};
    case MockProfile::SummaQaCorpus: return {{"lang", "text"}, {"score_to_return", "text"}};
    default: return json::object();
  }
}

struct AppError {
  std::string kind;
  std::string message;
};

std::vector<std::string> tokens_of(const std::string& s) { return text::tokenize(s).tokens; }

std::vector<double> run_profile(MockProfile profile, const std::vector<std::string>& cands,
                                const std::optional<std::vector<std::string>>& refs, const json& params) {
  std::vector<double> out;
  out.reserve(cands.size());
  switch (profile) {
    case MockProfile::LenRatio: {
      if (!refs) throw AppError{"MissingReference", "len-ratio needs references"};
      for (std::size_t i = 0; i < cands.size(); ++i) {
        const double a = static_cast<double>(tokens_of(cands[i]).size());
        const double b = static_cast<double>(tokens_of((*refs)[i]).size());
        out.push_back(std::max(a, b) == 0.0 ? 1.0 : std::min(a, b) / std::max(a, b));
      }
      break;
    }
    case MockProfile::EchoParam: {
      if (!params.contains("value") || !params["value"].is_number()) {
        throw AppError{"ConfigError", "echo-param needs a numeric 'value' parameter"};
      }
      out.assign(cands.size(), params["value"].get<double>());
      break;
    }
    case MockProfile::SummaQaCorpus: {
      if (!refs) throw AppError{"MissingReference", "summaqa needs references"};
      std::set<std::string> vocab;
      for (const auto& r : *refs) {
        for (auto& t : tokens_of(r)) vocab.insert(std::move(t));
      }
      for (const auto& c : cands) {
        const auto toks = tokens_of(c);
        const std::set<std::string> distinct(toks.begin(), toks.end());
        std::size_t hit = 0;
        for (const auto& t : distinct) hit += vocab.count(t);
        out.push_back(distinct.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(distinct.size()));
      }
      break;
    }
    case MockProfile::ItemHash:
      for (const auto& c : cands) out.push_back(item_hash_score(c));
      break;
  }
  return out;
}

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
  reply_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

bool apply_override(const MockOptions& o, std::string_view path, const std::string& body, httplib::Response& res) {
  if (!o.override_reply) return false;
  auto r = o.override_reply(path, body);
  if (!r) return false;
  res.status = r->first;
  res.set_content(r->second, "application/json");
  return true;
}

}  // namespace

struct MockServer::Impl {
  httplib::Server server;
  std::thread thread;
  mutable std::mutex auth_mutex;
  std::string last_auth;

  void record_auth(const httplib::Request& req) {
    std::lock_guard lock(auth_mutex);
    last_auth = req.get_header_value("Authorization");
  }
};

MockServer::MockServer(MockOptions options) : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto& svr = impl_->server;
  // Without SO_REUSEPORT so a second server on a taken port fails to bind.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });

  svr.Get("/info", [this](const httplib::Request& req, httplib::Response& res) {
    ++info_requests_;
    impl_->record_auth(req);
    if (apply_override(options_, "/info", req.body, res)) return;
    const auto info = info_for(options_.profile);
    reply_json(res, 200,
               {{"name", options_.name.value_or(info.name)},
                {"granularity", to_string(info.granularity)},
                {"reference_mode", to_string(info.reference_mode)},
                {"category", "model"},
                {"params_schema", params_schema(options_.profile)}});
  });

  svr.Post("/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
    const int index = evaluate_requests_++;
    impl_->record_auth(req);
    if (index < options_.stall_first) std::this_thread::sleep_for(options_.stall);
    if (apply_override(options_, "/evaluate", req.body, res)) return;

    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("candidates") ||
        !body["candidates"].is_array()) {
      reply_error(res, 400, "ConfigError", "request must be an object with a candidates array");
      return;
    }
    try {
      const auto cands = body["candidates"].get<std::vector<std::string>>();
      std::optional<std::vector<std::string>> refs;
      if (body.contains("references") && !body["references"].is_null()) {
        refs = body["references"].get<std::vector<std::string>>();
        if (refs->size() != cands.size()) throw AppError{"ConfigError", "references and candidates differ in length"};
      }
      json params = detail::to_json(options_.params);
      if (body.contains("params") && body["params"].is_object()) params.update(body["params"]);
      reply_json(res, 200, {{"scores", run_profile(options_.profile, cands, refs, params)}});
    } catch (const AppError& e) {
      reply_error(res, 422, e.kind, e.message);
    } catch (const json::exception& e) {
      reply_error(res, 400, "ConfigError", e.what());
    }
  });

  svr.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
    impl_->record_auth(req);
    if (apply_override(options_, "/embed", req.body, res)) return;
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("texts") || !body["texts"].is_array()) {
      reply_error(res, 400, "ConfigError", "request must be an object with a texts array");
      return;
    }
    try {
      const auto texts = body["texts"].get<std::vector<std::string>>();
      const auto mats = embed::OneHotProvider().embed(texts);
      json tokens = json::array(), vectors = json::array();
      std::size_t dim = 1;
      for (const auto& m : mats) {
        dim = m.dim;
        tokens.push_back(m.tokens);
        json rows = json::array();
        for (std::size_t i = 0; i < m.rows(); ++i) {
          const auto r = m.row(i);
          rows.push_back(std::vector<double>(r.begin(), r.end()));
        }
        vectors.push_back(std::move(rows));
      }
      reply_json(res, 200, {{"tokens", tokens}, {"vectors", vectors}, {"dim", dim}});
    } catch (const json::exception& e) {
      reply_error(res, 400, "ConfigError", e.what());
    }
  });
}

MockServer::~MockServer() { stop(); }

void MockServer::start(int port, const std::string& host) {
  if (impl_->thread.joinable()) throw MetricError(ErrorKind::ConfigError, "mock", "server already running");
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    if (port_ < 0) throw MetricError(ErrorKind::ConfigError, "mock", "cannot bind any port on " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      throw MetricError(ErrorKind::ConfigError, "mock", "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::string MockServer::last_authorization() const {
  std::lock_guard lock(impl_->auth_mutex);
  return impl_->last_auth;
}

}  // namespace luna::remote
