#include "luna/remote.hpp"

#include <cmath>
#include <fstream>

#include "json_util.hpp"

namespace luna::remote {

using nlohmann::json;

std::optional<Taxonomy> known_taxonomy(std::string_view name) {
  using C = Category;
  using R = ReferenceMode;
  using G = Granularity;
  if (name == "s3") return Taxonomy{C::Model, R::ReferenceBased, G::Sentence};
  if (name == "summaqa") return Taxonomy{C::Model, R::ReferenceBased, G::Corpus};
  if (name == "infolm") return Taxonomy{C::Model, R::ReferenceBased, G::Sentence};
  if (name == "blanc") return Taxonomy{C::Model, R::ReferenceFree, G::Sentence};
  if (name == "bartscore") return Taxonomy{C::Model, R::ReferenceBased, G::Sentence};
  if (name == "bary-score") return Taxonomy{C::Embedding, R::ReferenceBased, G::Sentence};
  if (name == "depth-score") return Taxonomy{C::Embedding, R::ReferenceBased, G::Sentence};
  return std::nullopt;
}

namespace {

[[noreturn]] void protocol_error(const RemoteMetricConfig& c, const std::string& why) {
  throw MetricError(ErrorKind::RemoteProtocolError, c.name, why);
}

json parse_object(const RemoteMetricConfig& c, const std::string& body, std::string_view what) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) protocol_error(c, std::string(what) + " body is not a JSON object");
  return j;
}

const std::string& wire_name(const RemoteMetricConfig& c) { return c.remote_name.empty() ? c.name : c.remote_name; }

}  // namespace

MetricDescriptor remote_info(const RemoteMetricConfig& config) {
  const auto reply = http::send(config.http, "GET", "/info", "", config.name);
  if (reply.status != 200) protocol_error(config, "/info returned HTTP " + std::to_string(reply.status));
  const auto body = parse_object(config, reply.body, "/info");

  auto text_field = [&](const char* key) {
    if (!body.contains(key) || !body[key].is_string()) {
      protocol_error(config, std::string("/info lacks string field '") + key + "'");
    }
    return body[key].get<std::string>();
  };
  const auto remote_name = text_field("name");

  MetricDescriptor d;
  d.name = config.name;
  try {
    d.granularity = parse_granularity(text_field("granularity"));
    d.reference_mode = parse_reference_mode(text_field("reference_mode"));
    if (body.contains("category") && body["category"].is_string()) {
      d.category = parse_category(body["category"].get<std::string>());
    } else if (auto t = known_taxonomy(config.name)) {
      d.category = t->category;
    } else {
      d.category = Category::Model;
    }
  } catch (const MetricError& e) {
    protocol_error(config, "/info: " + e.detail());
  }
  if (body.contains("params_schema") && !body["params_schema"].is_object()) {
    protocol_error(config, "/info params_schema must be an object");
  }
  d.params = config.params;
  d.params["remote_name"] = remote_name;
  d.params["base_url"] = config.http.base_url;
  return d;
}

ScoreVector remote_evaluate(const RemoteMetricConfig& config, std::span<const std::string> candidates,
                            std::optional<std::span<const std::string>> references) {
  json request = {{"metric", wire_name(config)},
                  {"candidates", json(std::vector<std::string>(candidates.begin(), candidates.end()))},
                  {"references", nullptr},
                  {"params", detail::to_json(config.params)}};
  if (references) request["references"] = std::vector<std::string>(references->begin(), references->end());

  const auto reply = http::send(config.http, "POST", "/evaluate", request.dump(), config.name);
  if (reply.status == 422) {
    const auto body = parse_object(config, reply.body, "error");
    if (!body.contains("error") || !body["error"].is_object() || !body["error"].contains("message") ||
        !body["error"]["message"].is_string()) {
      protocol_error(config, "error response lacks error.message");
    }
    const auto& err = body["error"];
    std::string message = err["message"].get<std::string>();
    if (err.contains("kind") && err["kind"].is_string()) message = err["kind"].get<std::string>() + ": " + message;
    throw MetricError(ErrorKind::ProviderFailure, config.name, "remote error: " + message);
  }
  if (reply.status != 200) protocol_error(config, "/evaluate returned HTTP " + std::to_string(reply.status));

  const auto body = parse_object(config, reply.body, "/evaluate");
  if (!body.contains("scores") || !body["scores"].is_array()) protocol_error(config, "response lacks a scores array");
  const auto& scores = body["scores"];
  if (scores.size() != candidates.size()) {
    protocol_error(config, "got " + std::to_string(scores.size()) + " scores for " +
                               std::to_string(candidates.size()) + " candidates");
  }
  ScoreVector out;
  out.reserve(scores.size());
  for (const auto& s : scores) {
    if (!s.is_number()) protocol_error(config, "score is not a number");
    const double v = s.get<double>();
    if (!std::isfinite(v)) protocol_error(config, "score is not finite");
    out.push_back(v);
  }
  return out;
}

namespace {

class RemoteMetric final : public Metric {
 public:
  RemoteMetric(MetricDescriptor d, std::shared_ptr<WarningSink> sink, RemoteMetricConfig config)
      : Metric(std::move(d), std::move(sink)), config_(std::move(config)) {}

 protected:
  double score(const EvalUnit& u) const override {
    const std::string cand[] = {u.candidate};
    if (!u.reference) return remote_evaluate(config_, cand, std::nullopt).front();
    const std::string ref[] = {*u.reference};
    return remote_evaluate(config_, cand, std::span<const std::string>(ref)).front();
  }

  ScoreVector score_batch(std::span<const EvalUnit> units, const BatchOptions&) const override {
    if (units.empty()) return {};
    std::vector<std::string> cands, refs;
    cands.reserve(units.size());
    bool have_refs = true;
    for (const auto& u : units) {
      cands.push_back(u.candidate);
      have_refs = have_refs && u.reference.has_value();
      refs.push_back(u.reference.value_or(""));
    }
    if (!have_refs) return remote_evaluate(config_, cands, std::nullopt);
    return remote_evaluate(config_, cands, std::span<const std::string>(refs));
  }

  ScoreVector score_corpus(std::span<const EvalUnit> units, const BatchOptions& options) const override {
    return score_batch(units, options);
  }

 private:
  RemoteMetricConfig config_;
};

MetricDescriptor registered_descriptor(const RemoteMetricConfig& c) {
  const auto t = known_taxonomy(c.name);
  MetricDescriptor d;
  d.name = c.name;
  d.category = c.category.value_or(t ? t->category : Category::Model);
  d.reference_mode = c.reference_mode.value_or(t ? t->reference_mode : ReferenceMode::ReferenceBased);
  d.granularity = c.granularity.value_or(t ? t->granularity : Granularity::Sentence);
  d.params = c.params;
  d.params["base_url"] = c.http.base_url;
  d.params["remote"] = true;
  return d;
}

}  // namespace

void register_remote_metric(Registry& registry, RemoteMetricConfig config) {
  auto descriptor = registered_descriptor(config);
  registry.add(std::move(descriptor), [config](const MetricDescriptor& d, const ParamMap& params,
                                               std::shared_ptr<WarningSink> sink) {
    ParamReader r(d.name, params);
    RemoteMetricConfig c = config;
    c.http.base_url = r.get_string("base_url", c.http.base_url);
    c.http.timeout = std::chrono::milliseconds(r.get_int("timeout_ms", c.http.timeout.count()));
    c.http.retries = static_cast<int>(r.get_int("retries", c.http.retries));
    c.http.backoff = std::chrono::milliseconds(r.get_int("backoff_ms", c.http.backoff.count()));
    c.probe = r.get_bool("probe", c.probe);
    if (c.http.retries < 0) r.reject("retries", "must be >= 0");
    if (c.http.timeout.count() <= 0) r.reject("timeout_ms", "must be positive");
    for (auto& [k, v] : r.take_rest()) c.params[k] = v;

    MetricDescriptor instance = d;
    if (c.probe) {
      const auto info = remote_info(c);
      if (!c.granularity) instance.granularity = info.granularity;
      if (!c.reference_mode) instance.reference_mode = info.reference_mode;
      if (!c.category) instance.category = info.category;
      for (const auto& [k, v] : info.params) instance.params.try_emplace(k, v);
    }
    return std::make_shared<RemoteMetric>(std::move(instance), std::move(sink), std::move(c));
  });
}

std::vector<RemoteMetricConfig> load_registrations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MetricError(ErrorKind::ConfigError, "", "cannot open registration file '" + path.string() + "'");
  const auto doc = json::parse(in, nullptr, false);
  auto bad = [&](const std::string& why) -> void {
    throw MetricError(ErrorKind::ConfigError, "", path.string() + ": " + why);
  };
  if (doc.is_discarded()) bad("not valid JSON");

  json entries;
  if (doc.is_array()) {
    entries = doc;
  } else if (doc.is_object() && doc.contains("remote_metrics") && doc["remote_metrics"].is_array()) {
    entries = doc["remote_metrics"];
  } else if (doc.is_object() && doc.empty()) {
    entries = json::array();
  } else {
    bad("expected an array or {\"remote_metrics\": [...]}");
  }

  std::vector<RemoteMetricConfig> out;
  for (const auto& e : entries) {
    if (!e.is_object() || !e.contains("name") || !e["name"].is_string() || !e.contains("base_url") ||
        !e["base_url"].is_string()) {
      bad("every entry needs string fields name and base_url");
    }
    RemoteMetricConfig c;
    c.name = e["name"].get<std::string>();
    c.http.base_url = e["base_url"].get<std::string>();
    c.remote_name = e.value("metric", std::string());
    c.probe = e.value("probe", true);
    if (e.contains("timeout_ms")) c.http.timeout = std::chrono::milliseconds(e["timeout_ms"].get<std::int64_t>());
    if (e.contains("retries")) c.http.retries = e["retries"].get<int>();
    if (e.contains("backoff_ms")) c.http.backoff = std::chrono::milliseconds(e["backoff_ms"].get<std::int64_t>());
    try {
      if (e.contains("category")) c.category = parse_category(e["category"].get<std::string>());
      if (e.contains("reference_mode")) c.reference_mode = parse_reference_mode(e["reference_mode"].get<std::string>());
      if (e.contains("granularity")) c.granularity = parse_granularity(e["granularity"].get<std::string>());
    } catch (const MetricError& err) {
      bad(c.name + ": " + err.detail());
    } catch (const json::exception& err) {
      bad(c.name + ": " + err.what());
    }
    if (e.contains("params")) c.params = detail::params_from_json(e["params"]);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace luna::remote
