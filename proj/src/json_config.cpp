#include "roirel/json_config.hpp"

#include <cstdio>

#include "roirel/rng.hpp"

namespace roirel {

namespace {
const nlohmann::json& empty_object() {
  static const nlohmann::json kEmpty = nlohmann::json::object();
  return kEmpty;
}
}  // namespace

StrictReader::StrictReader(const nlohmann::json& object, std::string path)
    : object_(object.is_null() ? empty_object() : object), path_(std::move(path)) {
  if (!object_.is_object()) throw ConfigError("config section '" + path_ + "' must be an object");
}

StrictReader StrictReader::child(const std::string& key) {
  seen_.insert(key);
  auto it = object_.find(key);
  if (it == object_.end()) return StrictReader(empty_object(), field(key));
  if (!it->is_object()) throw ConfigError("config section '" + field(key) + "' must be an object");
  return StrictReader(*it, field(key));
}

const nlohmann::json* StrictReader::raw(const std::string& key) {
  seen_.insert(key);
  auto it = object_.find(key);
  return it == object_.end() ? nullptr : &*it;
}

void StrictReader::finish() const {
  for (auto it = object_.begin(); it != object_.end(); ++it) {
    if (!seen_.count(it.key())) throw ConfigError("unknown config field '" + field(it.key()) + "'");
  }
}

std::string config_hash(const nlohmann::json& canonical) {
  const std::uint64_t h = fnv1a64(canonical.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace roirel
