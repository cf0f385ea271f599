#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include <json.hpp>

#include "stereopose/transformer.hpp"

namespace stereopose {

// Checkpoint layout:
//   line 1   stereopose-checkpoint <schema_version>
//   line 2   header json: config, seed, epoch, architecture notes and the
//            tensor table [{name, rows, cols}] in storage order
//   then     every tensor's values as little-endian IEEE-754 doubles, row-major,
//            in the order of the tensor table, with no padding.
inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  TransformerParams params;
  std::uint64_t seed = 0;
  int epoch = 0;
};

nlohmann::json model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stereopose
