#include "luna/core.hpp"

namespace luna {

ParamReader::ParamReader(std::string metric, const ParamMap& params)
    : metric_(std::move(metric)), params_(params) {}

bool ParamReader::has(const std::string& key) const { return params_.contains(key); }

const ParamValue* ParamReader::lookup(const std::string& key) {
  auto it = params_.find(key);
  if (it == params_.end()) return nullptr;
  used_[key] = true;
  return &it->second;
}

void ParamReader::reject(const std::string& key, const std::string& why) const {
  throw MetricError(ErrorKind::ConfigError, metric_, "parameter '" + key + "': " + why);
}

std::int64_t ParamReader::get_int(const std::string& key, std::int64_t fallback) {
  const ParamValue* v = lookup(key);
  if (!v) return fallback;
  if (auto p = std::get_if<std::int64_t>(v)) return *p;
  if (auto d = std::get_if<double>(v); d && *d == static_cast<double>(static_cast<std::int64_t>(*d))) {
    return static_cast<std::int64_t>(*d);
  }
  reject(key, "expected an integer, got '" + param_to_string(*v) + "'");
}

double ParamReader::get_double(const std::string& key, double fallback) {
  const ParamValue* v = lookup(key);
  if (!v) return fallback;
  if (auto p = std::get_if<double>(v)) return *p;
  if (auto p = std::get_if<std::int64_t>(v)) return static_cast<double>(*p);
  reject(key, "expected a number, got '" + param_to_string(*v) + "'");
}

bool ParamReader::get_bool(const std::string& key, bool fallback) {
  const ParamValue* v = lookup(key);
  if (!v) return fallback;
  if (auto p = std::get_if<bool>(v)) return *p;
  reject(key, "expected a flag, got '" + param_to_string(*v) + "'");
}

std::string ParamReader::get_string(const std::string& key, const std::string& fallback) {
  return get_optional_string(key).value_or(fallback);
}

std::optional<std::string> ParamReader::get_optional_string(const std::string& key) {
  const ParamValue* v = lookup(key);
  if (!v) return std::nullopt;
  if (auto p = std::get_if<std::string>(v)) return *p;
  reject(key, "expected text, got '" + param_to_string(*v) + "'");
}

ParamMap ParamReader::take_rest() {
  ParamMap rest;
  for (const auto& [k, v] : params_) {
    if (!used_.contains(k)) {
      rest.emplace(k, v);
      used_[k] = true;
    }
  }
  return rest;
}

void ParamReader::finish() const {
  for (const auto& [k, v] : params_) {
    if (!used_.contains(k)) reject(k, "unknown parameter");
  }
}

void Registry::add(MetricDescriptor descriptor, MetricFactory factory) {
  if (descriptor.name.empty()) throw MetricError(ErrorKind::ConfigError, "", "metric name is empty");
  if (entries_.contains(descriptor.name)) {
    throw MetricError(ErrorKind::ConfigError, descriptor.name, "metric is already registered");
  }
  std::string name = descriptor.name;
  entries_.emplace(std::move(name), Entry{std::move(descriptor), std::move(factory)});
}

bool Registry::contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

const MetricDescriptor& Registry::descriptor(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw MetricError(ErrorKind::ConfigError, std::string(name), "unknown metric");
  }
  return it->second.descriptor;
}

std::vector<MetricDescriptor> Registry::list() const {
  std::vector<MetricDescriptor> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(entry.descriptor);
  return out;
}

MetricPtr Registry::init_metric(std::string_view name, const ParamMap& params,
                                std::shared_ptr<WarningSink> sink) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw MetricError(ErrorKind::ConfigError, std::string(name), "unknown metric");
  }
  MetricDescriptor instance = it->second.descriptor;
  for (const auto& [k, v] : params) instance.params[k] = v;
  return it->second.factory(instance, params, sink ? std::move(sink) : default_warning_sink());
}

}  // namespace luna
