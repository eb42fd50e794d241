#pragma once

// Validator for the subset of JSON Schema used by the files in schemas/:
// type, enum, required, properties, additionalProperties (bool), items,
// minItems, minimum, maximum, exclusiveMinimum, exclusiveMaximum, pattern.

#include <cmath>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mffals {

namespace detail {

inline bool json_has_type(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == std::floor(v.get<double>()));
  if (t == "number") return v.is_number();
  return false;
}

inline void validate_node(const nlohmann::json& v, const nlohmann::json& s, const std::string& path,
                          std::vector<std::string>& errors) {
  if (s.contains("type")) {
    const auto& t = s["type"];
    bool ok = false;
    if (t.is_string()) ok = json_has_type(v, t.get<std::string>());
    else
      for (const auto& x : t) ok = ok || json_has_type(v, x.get<std::string>());
    if (!ok) {
      errors.push_back(path + ": expected type " + t.dump());
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& x : s["enum"]) found = found || x == v;
    if (!found) errors.push_back(path + ": value " + v.dump() + " not in " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) errors.push_back(path + ": below minimum");
    if (s.contains("maximum") && x > s["maximum"].get<double>()) errors.push_back(path + ": above maximum");
    if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>()))
      errors.push_back(path + ": must exceed " + s["exclusiveMinimum"].dump());
    if (s.contains("exclusiveMaximum") && !(x < s["exclusiveMaximum"].get<double>()))
      errors.push_back(path + ": must be below " + s["exclusiveMaximum"].dump());
  }
  if (v.is_string() && s.contains("pattern")) {
    if (!std::regex_search(v.get<std::string>(), std::regex(s["pattern"].get<std::string>())))
      errors.push_back(path + ": does not match " + s["pattern"].get<std::string>());
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      errors.push_back(path + ": needs at least " + s["minItems"].dump() + " items");
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) validate_node(v[i], s["items"], path + "[" + std::to_string(i) + "]", errors);
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>())) errors.push_back(path + ": missing '" + r.get<std::string>() + "'");
    const nlohmann::json empty = nlohmann::json::object();
    const auto& props = s.contains("properties") ? s["properties"] : empty;
    const bool closed = s.contains("additionalProperties") && s["additionalProperties"] == false;
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (props.contains(it.key())) validate_node(it.value(), props[it.key()], path + "." + it.key(), errors);
      else if (closed) errors.push_back(path + ": unexpected property '" + it.key() + "'");
    }
  }
}

}  // namespace detail

/// Human-readable violations; empty when `value` conforms.
inline std::vector<std::string> schema_errors(const nlohmann::json& value, const nlohmann::json& schema) {
  std::vector<std::string> errors;
  detail::validate_node(value, schema, "$", errors);
  return errors;
}

}  // namespace mffals
