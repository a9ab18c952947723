#pragma once

#include <json.hpp>

#include "luna/core.hpp"

namespace luna::detail {

inline nlohmann::json to_json(const ParamValue& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

inline nlohmann::json to_json(const ParamMap& params) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : params) out[k] = to_json(v);
  return out;
}

// Nested values are kept as their JSON text.
inline ParamValue param_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  return j.dump();
}

inline ParamMap params_from_json(const nlohmann::json& j) {
  ParamMap out;
  if (!j.is_object()) return out;
  for (const auto& [k, v] : j.items()) out[k] = param_from_json(v);
  return out;
}

}  // namespace luna::detail
