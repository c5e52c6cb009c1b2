#pragma once

// Helpers for strict JSON configuration objects.

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sacropipe/errors.hpp"

namespace sacropipe {

/// Rejects keys outside `allowed` so typos in config files surface as errors.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       std::string_view context) {
  if (!j.is_object()) throw ConfigError(std::string(context) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok |= it.key() == a;
    if (!ok) throw ConfigError(std::string(context) + ": unknown key '" + it.key() + "'");
  }
}

/// Recursively overlays `patch` onto `base` (objects merge, everything else replaces).
inline void merge_patch(nlohmann::json& base, const nlohmann::json& patch) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (base.contains(it.key())) merge_patch(base[it.key()], it.value());
    else base[it.key()] = it.value();
  }
}

}  // namespace sacropipe
