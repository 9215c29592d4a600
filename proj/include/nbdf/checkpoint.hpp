#pragma once

// Checkpoint = model.json (architecture, target, block names/shapes, training
// config echo) + model.bin (blocks concatenated in declared order, row-major,
// little-endian float32).

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "nbdf/model.hpp"

namespace nbdf {

using json = nlohmann::json;

inline constexpr const char* kCheckpointFormat = "nbdf-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelParameters<float> params;
  int ref_channel = 0;
  std::uint64_t seed = 0;
  json config = json::object();  // training configuration echo

  const Architecture& arch() const { return params.arch(); }
};

inline json architecture_to_json(const Architecture& a) {
  return {{"channels", a.channels},
          {"input_dim", a.input_dim()},
          {"output_dim", a.output_dim()},
          {"bidirectional", a.bidirectional},
          {"hidden1", a.hidden1},
          {"hidden2", a.hidden2},
          {"target", to_string(a.target)}};
}

inline Architecture architecture_from_json(const json& j) {
  Architecture a;
  a.channels = j.at("channels").get<int>();
  a.bidirectional = j.at("bidirectional").get<bool>();
  a.hidden1 = j.at("hidden1").get<int>();
  a.hidden2 = j.at("hidden2").get<int>();
  a.target = parse_target(j.at("target").get<std::string>());
  a.validate();
  return a;
}

/// Writes <dir>/model.json and <dir>/model.bin.
inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir) {
  static_assert(std::endian::native == std::endian::little);
  std::filesystem::create_directories(dir);
  json blocks = json::array();
  for (const auto& b : ck.params.layout())
    blocks.push_back({{"name", b.name}, {"shape", {b.rows, b.cols}}});
  const json meta = {{"format", kCheckpointFormat},
                     {"version", kCheckpointVersion},
                     {"architecture", architecture_to_json(ck.arch())},
                     {"target", to_string(ck.arch().target)},
                     {"channels", ck.arch().channels},
                     {"ref_channel", ck.ref_channel},
                     {"seed", ck.seed},
                     {"parameter_count", ck.params.size()},
                     {"dtype", "float32-le"},
                     {"config", ck.config},
                     {"blocks", blocks}};
  {
    std::ofstream os(dir / "model.json");
    if (!os) throw std::runtime_error("cannot write " + (dir / "model.json").string());
    os << meta.dump(2) << "\n";
  }
  std::ofstream bin(dir / "model.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "model.bin").string());
  const auto v = ck.params.values();
  bin.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!bin) throw std::runtime_error("failed writing model.bin");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream js(dir / "model.json");
  if (!js) throw std::runtime_error("cannot open " + (dir / "model.json").string());
  const json meta = json::parse(js);
  if (meta.value("format", "") != kCheckpointFormat)
    throw std::runtime_error("not an nbdf checkpoint: " + dir.string());
  if (meta.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  ck.params = ModelParameters<float>(architecture_from_json(meta.at("architecture")));
  ck.ref_channel = meta.at("ref_channel").get<int>();
  ck.seed = meta.value("seed", std::uint64_t{0});
  ck.config = meta.value("config", json::object());

  const auto& blocks = meta.at("blocks");
  const auto& layout = ck.params.layout();
  if (blocks.size() != layout.size())
    throw std::runtime_error("checkpoint block list does not match its architecture");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& b = blocks[i];
    if (b.at("name").get<std::string>() != layout[i].name ||
        b.at("shape")[0].get<int>() != layout[i].rows ||
        b.at("shape")[1].get<int>() != layout[i].cols)
      throw std::runtime_error("checkpoint block '" + b.at("name").get<std::string>() +
                               "' does not match the expected layout");
  }
  if (ck.ref_channel < 0 || ck.ref_channel >= ck.arch().channels)
    throw std::runtime_error("checkpoint reference channel out of range");

  std::ifstream bin(dir / "model.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw std::runtime_error("cannot open " + (dir / "model.bin").string());
  const auto bytes = static_cast<std::size_t>(bin.tellg());
  if (bytes != ck.params.size() * sizeof(float))
    throw std::runtime_error("model.bin size does not match the declared blocks");
  bin.seekg(0);
  auto v = ck.params.mutable_values();
  bin.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  if (!bin) throw std::runtime_error("failed reading model.bin");
  return ck;
}

}  // namespace nbdf
