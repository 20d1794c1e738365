#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "roirel/errors.hpp"

namespace roirel {

/// Reads a JSON object field by field and rejects keys nobody asked for.
/// Errors name the full dotted path of the offending field.
class StrictReader {
 public:
  StrictReader(const nlohmann::json& object, std::string path);

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("invalid value for config field '" + field(key) + "'");
    }
  }

  bool has(const std::string& key) const { return object_.contains(key); }
  /// Nested object reader; `key` must hold an object if present.
  StrictReader child(const std::string& key);
  const nlohmann::json* raw(const std::string& key);
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  /// Throws ConfigError naming the first unknown key.
  void finish() const;

 private:
  const nlohmann::json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Helper for the "value must be in range" checks.
inline void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("invalid config field '" + field + "': " + what);
}

/// 16-hex-digit FNV-1a hash of the canonical (sorted-key) JSON dump.
std::string config_hash(const nlohmann::json& canonical);

}  // namespace roirel
