#pragma once

// Strict JSON field readers shared by the config and dataset code. Every
// reader names the offending field in its ConfigError.

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>

#include "biseg/errors.hpp"

namespace biseg::detail {

using json = nlohmann::json;

inline void expect_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

[[noreturn]] inline void unknown_key(const std::string& where) {
  throw ConfigError("unknown config key '" + where + "'");
}

inline int read_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  const auto x = v.get<long long>();
  if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(where + ": integer out of range");
  return static_cast<int>(x);
}

inline std::uint64_t read_u64(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(where + ": expected a non-negative integer");
}

inline double read_double(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

inline bool read_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
  return v.get<bool>();
}

inline std::string read_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

}  // namespace biseg::detail
