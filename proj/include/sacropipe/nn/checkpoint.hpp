#pragma once

// Checkpoint container:
//   8 bytes  magic "SPCKPT01"
//   u32 LE   format version
//   u64 LE   header length L
//   L bytes  UTF-8 JSON header {"config", "metadata", "tensors": [{name, shape, offset, count}]}
//   float32 LE tensor data, concatenated in header order (offsets in floats)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sacropipe/errors.hpp"
#include "sacropipe/nn/tensor.hpp"

namespace sacropipe::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'P', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json config;    // model + training configuration echo
  nlohmann::json metadata;  // epoch, phase, monitored metric, input size, ...
  std::map<std::string, std::vector<float>> tensors;
  std::map<std::string, std::vector<int>> shapes;
};

/// Snapshot of every parameter and buffer of a model.
template <class Model>
Checkpoint capture(Model& model, nlohmann::json config, nlohmann::json metadata) {
  Checkpoint ck{std::move(config), std::move(metadata), {}, {}};
  for (Param* p : model.params()) {
    ck.tensors[p->name] = p->value;
    ck.shapes[p->name] = p->shape;
  }
  for (const Buffer& b : model.buffers()) {
    ck.tensors[b.name] = *b.values;
    ck.shapes[b.name] = {static_cast<int>(b.values->size())};
  }
  return ck;
}

/// Copies tensors into a model of matching architecture.
template <class Model>
void restore(Model& model, const Checkpoint& ck) {
  auto take = [&](const std::string& name, std::vector<float>& dst) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw ConfigError("checkpoint lacks tensor '" + name + "'");
    if (it->second.size() != dst.size())
      throw ConfigError("checkpoint tensor '" + name + "' has " + std::to_string(it->second.size()) +
                        " values, model expects " + std::to_string(dst.size()));
    dst = it->second;
  };
  for (Param* p : model.params()) take(p->name, p->value);
  for (const Buffer& b : model.buffers()) take(b.name, *b.values);
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, values] : ck.tensors) {
    auto shape_it = ck.shapes.find(name);
    std::vector<int> shape = shape_it != ck.shapes.end() ? shape_it->second : std::vector<int>{int(values.size())};
    table.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", values.size()}});
    offset += values.size();
  }
  const nlohmann::json header{{"config", ck.config}, {"metadata", ck.metadata}, {"tensors", table}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, values] : ck.tensors)
      out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& producing_stage = "train") {
  if (!std::filesystem::exists(path)) throw UpstreamMissing("checkpoint not found: " + path.string(), producing_stage);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::array<char, 8> magic{};
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || magic != kCheckpointMagic) throw ConfigError("not a sacropipe checkpoint: " + path.string());
  if (version != kCheckpointVersion)
    throw ConfigError("unsupported checkpoint version " + std::to_string(version) + " in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ConfigError("truncated checkpoint header: " + path.string());

  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  ck.config = header.at("config");
  ck.metadata = header.at("metadata");
  const auto data_start = in.tellg();
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto count = t.at("count").get<std::uint64_t>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    std::vector<float> values(count);
    in.seekg(data_start + static_cast<std::streamoff>(offset * 4));
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * 4));
    if (!in) throw ConfigError("truncated checkpoint data for '" + name + "' in " + path.string());
    ck.tensors[name] = std::move(values);
    ck.shapes[name] = t.at("shape").get<std::vector<int>>();
  }
  return ck;
}

}  // namespace sacropipe::nn
