#include "stereopose/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace stereopose {

namespace {

using nlohmann::json;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

}  // namespace

json model_config_json(const ModelConfig& c) {
  return {{"layers", c.layers},
          {"hidden_dim", c.hidden_dim},
          {"heads", c.heads},
          {"ffn_multiplier", c.ffn_multiplier},
          {"modality", c.modality == Modality::Mono ? "mono" : "stereo"},
          {"keypoint_onehot", c.keypoint_onehot},
          {"rotation_mode", c.rotation_mode == RotationMode::SixD ? "sixd" : "axis_angle3"},
          {"class_count", c.class_count},
          {"keypoint_count", kKeypointCount},
          {"w_pose", c.w_pose},
          {"w_vertex", c.w_vertex},
          {"w_kp3d", c.w_kp3d}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.layers = j.at("layers");
    c.hidden_dim = j.at("hidden_dim");
    c.heads = j.at("heads");
    c.ffn_multiplier = j.at("ffn_multiplier");
    const std::string modality = j.at("modality");
    if (modality != "mono" && modality != "stereo") throw IoFailure("unknown modality '" + modality + "'");
    c.modality = modality == "mono" ? Modality::Mono : Modality::Stereo;
    c.keypoint_onehot = j.at("keypoint_onehot");
    const std::string rot = j.at("rotation_mode");
    if (rot != "sixd" && rot != "axis_angle3") throw IoFailure("unknown rotation_mode '" + rot + "'");
    c.rotation_mode = rot == "sixd" ? RotationMode::SixD : RotationMode::AxisAngle3;
    c.class_count = j.at("class_count");
    if (j.at("keypoint_count").get<int>() != kKeypointCount) throw IoFailure("keypoint_count must be 12");
    c.w_pose = j.at("w_pose");
    c.w_vertex = j.at("w_vertex");
    c.w_kp3d = j.at("w_kp3d");
  } catch (const json::exception& e) {
    throw IoFailure(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const TransformerParams& p = ckpt.params;
  json tensors = json::array();
  for (const auto& t : p.tensors) tensors.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  const json header = {{"config", model_config_json(p.config)},
                       {"seed", ckpt.seed},
                       {"epoch", ckpt.epoch},
                       {"architecture",
                        {{"norm", "pre"}, {"activation", "gelu"}, {"init", "xavier_uniform"}, {"pose_token", true}}},
                       {"tensors", tensors}};
  out << "stereopose-checkpoint " << kCheckpointSchemaVersion << '\n' << header.dump() << '\n';
  std::vector<char> bytes(p.values.size() * sizeof(double));
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const std::uint64_t v = to_little(std::bit_cast<std::uint64_t>(p.values[i]));
    std::memcpy(bytes.data() + i * sizeof v, &v, sizeof v);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoFailure("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoFailure("empty checkpoint");
  std::istringstream magic(line);
  std::string tag;
  int version = 0;
  magic >> tag >> version;
  if (tag != "stereopose-checkpoint") throw IoFailure("not a checkpoint file");
  if (version != kCheckpointSchemaVersion) throw IoFailure("checkpoint schema " + std::to_string(version) + " is not supported");
  if (!std::getline(in, line)) throw IoFailure("checkpoint header missing");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw IoFailure(std::string("bad checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.params = make_params(model_config_from_json(header.at("config")));
  ckpt.seed = header.at("seed");
  ckpt.epoch = header.at("epoch");
  const json& tensors = header.at("tensors");
  if (tensors.size() != ckpt.params.tensors.size()) throw IoFailure("checkpoint tensor table does not match its config");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = ckpt.params.tensors[i];
    if (tensors[i].at("name") != t.name || tensors[i].at("rows") != t.rows || tensors[i].at("cols") != t.cols)
      throw IoFailure("checkpoint tensor " + std::to_string(i) + " does not match its config");
  }
  std::vector<char> bytes(ckpt.params.values.size() * sizeof(double));
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoFailure("checkpoint is truncated");
  for (std::size_t i = 0; i < ckpt.params.values.size(); ++i) {
    std::uint64_t v;
    std::memcpy(&v, bytes.data() + i * sizeof v, sizeof v);
    ckpt.params.values[i] = std::bit_cast<double>(to_little(v));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoFailure("trailing bytes after checkpoint data");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace stereopose
