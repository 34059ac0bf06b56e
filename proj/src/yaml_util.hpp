#pragma once

// Strict YAML access: every failure becomes a ConfigError that names the
// file, line and column.

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

#include "mft/errors.hpp"

namespace mft::yaml {

inline std::string where(const YAML::Node& n, const std::string& origin) {
  const YAML::Mark m = n.Mark();
  if (m.line < 0) return origin;
  return origin + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1);
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& origin,
                              const std::string& msg) {
  throw ConfigError(where(n, origin) + ": " + msg);
}

inline void expect_map(const YAML::Node& n, const std::string& origin, const std::string& what) {
  if (!n.IsMap()) fail(n, origin, what + " must be a mapping");
}

inline void check_keys(const YAML::Node& n, std::initializer_list<std::string_view> allowed,
                       const std::string& origin, const std::string& what) {
  expect_map(n, origin, what);
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      fail(kv.first, origin, "unknown key '" + key + "' in " + what);
    }
  }
}

template <class T>
T get(const YAML::Node& n, const std::string& origin, const std::string& what) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, origin, "bad value for " + what);
  }
}

template <class T>
void read(const YAML::Node& parent, const char* key, T& out, const std::string& origin,
          const std::string& prefix = "") {
  if (const YAML::Node n = parent[key]) out = get<T>(n, origin, prefix + key);
}

}  // namespace mft::yaml
