#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stereopose/geometry.hpp"

namespace stereopose {

enum class Part : std::uint8_t { A = 0, B = 1 };

struct ModelKeypoint {
  Part part = Part::A;
  Vec3 position = Vec3::Zero();
};

/// Two rigid point-set parts joined by a hinge. Part A is the reference part;
/// the articulation angle rotates part B about `hinge_axis` through `hinge_point`.
/// The surface sample set is part_a followed by part_b.
struct InstrumentModel {
  int class_id = 0;
  std::string name;
  std::vector<Vec3> part_a;
  std::vector<Vec3> part_b;
  Vec3 hinge_point = Vec3::Zero();
  Vec3 hinge_axis = Vec3::UnitZ();
  std::array<ModelKeypoint, kKeypointCount> keypoints{};
  double diameter = 0.0;

  std::size_t surface_size() const { return part_a.size() + part_b.size(); }
  const Vec3& surface_point(std::size_t i) const {
    return i < part_a.size() ? part_a[i] : part_b[i - part_a.size()];
  }
  Part surface_part(std::size_t i) const { return i < part_a.size() ? Part::A : Part::B; }
  std::vector<Vec3> surface() const;
};

inline constexpr int kMaxInstrumentCount = 32;
inline constexpr std::size_t kSurfacePointsPerPart = 256;

/// Deterministic procedural set of `count` scissor/forceps-like instruments.
/// Every fourth class is a rescaled (0.9x or 1.1x) copy of its predecessor.
std::vector<InstrumentModel> make_instrument_set(std::uint64_t seed, int count);

/// Maximum pairwise distance between surface points at zero articulation.
double diameter(const InstrumentModel& model);

/// Throws InvalidArgument when a structural invariant does not hold.
void validate_model(const InstrumentModel& model);

const InstrumentModel& model_for_class(const std::vector<InstrumentModel>& models, int class_id);

struct ModelSet {
  std::uint64_t seed = 0;
  std::vector<InstrumentModel> models;
};

// Text format, one token group per line:
//   stereopose-models <schema_version>
//   seed <u64>
//   count <n>
//   then per model:
//     model <class_id> <name>
//     hinge_point <x> <y> <z>
//     hinge_axis <x> <y> <z>
//     diameter <mm>
//     keypoints            followed by 12 lines "<A|B> <x> <y> <z>"
//     part_a <n>           followed by n lines "<x> <y> <z>"
//     part_b <n>           followed by n lines "<x> <y> <z>"
//     end_model
// Floats are written in shortest round-trip form.
inline constexpr int kModelSetSchemaVersion = 1;

void write_model_set(std::ostream& out, const ModelSet& set);
ModelSet read_model_set(std::istream& in);
void save_model_set(const std::filesystem::path& path, const ModelSet& set);
ModelSet load_model_set(const std::filesystem::path& path);

}  // namespace stereopose
