#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "roirel/parameter.hpp"

namespace roirel {

/// Checkpoint layout: `<stem>.json` manifest plus `<stem>.bin` holding every
/// tensor as little-endian IEEE-754 float64, concatenated in manifest order.
///
/// Manifest fields: format, dtype, byte_order, data_file, seed, config_hash,
/// metadata (free-form), tensors[{name, shape, offset, count, trainable}].
/// `offset` and `count` are in elements, not bytes.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json metadata = nlohmann::json::object();
};

inline constexpr const char* kCheckpointFormat = "roirel-checkpoint-v1";

void save_checkpoint(const std::filesystem::path& manifest_path, const ParameterStore& params,
                     const CheckpointInfo& info);

/// Loads values into an existing store. Every manifest tensor must match a
/// parameter of the same name and shape, and vice versa.
CheckpointInfo load_checkpoint(const std::filesystem::path& manifest_path,
                               ParameterStore& params);

}  // namespace roirel
