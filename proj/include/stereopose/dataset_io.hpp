#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stereopose/synth.hpp"

namespace stereopose {

// Dataset file. First line:
//   stereopose-dataset <schema_version> <header json>
// where the header object holds rig, seed, n, noise (or null), model_seed,
// model_count and the sampler ranges. Then one record per line, space separated:
//   class_id
//   pose[10]                      t(3) rotation6(6) articulation
//   12 x (uL vL uR vR vis)        vis is 0 or 1
//   12 x (x y z)                  ground-truth posed keypoints
//   obs_class score               detector label and confidence
//   box_left(4) box_right(4)      x0 y0 x1 y1
// Floats carry 9 significant digits.
//
// Sequence file. First line:
//   stereopose-sequence <schema_version> <header json>
// then one detection per line: frame_index track_gt_id followed by the
// dataset record fields above.
inline constexpr int kDatasetSchemaVersion = 1;
inline constexpr int kSequenceSchemaVersion = 1;

struct DatasetHeader {
  CameraRig rig;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::optional<NoiseConfig> noise;
  std::uint64_t model_seed = 0;
  int model_count = 0;
  PoseSampler sampler;
};

struct Dataset {
  DatasetHeader header;
  std::vector<DatasetRecord> records;
};

void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Generates `n` records (in parallel) and writes them in index order.
Dataset generate_dataset(const std::vector<InstrumentModel>& models, std::uint64_t model_seed, const CameraRig& rig,
                         const PoseSampler& sampler, std::size_t n, const std::optional<NoiseConfig>& noise);

struct SequenceFile {
  CameraRig rig;
  std::uint64_t model_seed = 0;
  int model_count = 0;
  Sequence sequence;
};

void write_sequence(std::ostream& out, const SequenceFile& seq);
SequenceFile read_sequence(std::istream& in);
void save_sequence(const std::filesystem::path& path, const SequenceFile& seq);
SequenceFile load_sequence(const std::filesystem::path& path);

/// Shortest form that round-trips `value` at `digits` significant digits.
std::string format_number(double value, int digits = 9);

}  // namespace stereopose
