#include "roirel/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "roirel/errors.hpp"

namespace roirel {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& manifest_path, const ParameterStore& params,
                     const CheckpointInfo& info) {
  std::filesystem::path data_path = manifest_path;
  data_path.replace_extension(".bin");
  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little";
  manifest["data_file"] = data_path.filename().string();
  manifest["seed"] = info.seed;
  manifest["config_hash"] = info.config_hash;
  manifest["metadata"] = info.metadata;
  nlohmann::json tensors = nlohmann::json::array();

  std::ofstream bin(data_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write checkpoint data " + data_path.string());
  std::size_t offset = 0;
  for (const auto& p : params.all()) {
    tensors.push_back({{"name", p.name},
                       {"shape", p.value.shape()},
                       {"offset", offset},
                       {"count", p.value.size()},
                       {"trainable", p.trainable}});
    for (double v : p.value.storage()) {
      const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      bin.write(buf, 8);
    }
    offset += p.value.size();
  }
  if (!bin) throw IoError("failed writing " + data_path.string());
  manifest["tensors"] = std::move(tensors);

  std::ofstream js(manifest_path, std::ios::trunc);
  if (!js) throw IoError("cannot write checkpoint manifest " + manifest_path.string());
  js << manifest.dump(2) << '\n';
}

CheckpointInfo load_checkpoint(const std::filesystem::path& manifest_path,
                               ParameterStore& params) {
  std::ifstream js(manifest_path);
  if (!js) throw IoError("cannot read checkpoint manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw IoError("unsupported checkpoint format in " + manifest_path.string());
  }
  const auto data_path = manifest_path.parent_path() / manifest.at("data_file").get<std::string>();
  std::ifstream bin(data_path, std::ios::binary);
  if (!bin) throw IoError("cannot read checkpoint data " + data_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(tensors.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& t : tensors) {
    const auto name = t.at("name").get<std::string>();
    Parameter* p = params.find(name);
    if (!p) throw ConfigError("checkpoint tensor '" + name + "' has no matching parameter");
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != p->value.shape()) {
      throw ConfigError("checkpoint tensor '" + name + "' has shape " + shape_string(shape) +
                        ", model expects " + shape_string(p->value.shape()));
    }
    const auto offset = t.at("offset").get<std::size_t>();
    const auto count = t.at("count").get<std::size_t>();
    if ((offset + count) * 8 > bytes.size() || count != p->value.size()) {
      throw IoError("checkpoint data truncated for '" + name + "'");
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, bytes.data() + (offset + i) * 8, 8);
      p->value[i] = std::bit_cast<double>(to_little(bits));
    }
  }
  CheckpointInfo info;
  info.seed = manifest.value("seed", std::uint64_t{0});
  info.config_hash = manifest.value("config_hash", "");
  info.metadata = manifest.value("metadata", nlohmann::json::object());
  return info;
}

}  // namespace roirel
