#include "stereopose/instruments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stereopose/kernels.hpp"
#include "stereopose/rng.hpp"

namespace stereopose {

namespace {

enum class Family { Scissors, CurvedScissors, NeedleHolder, Forceps };

const char* family_name(Family f) {
  switch (f) {
    case Family::Scissors: return "scissors";
    case Family::CurvedScissors: return "curved-scissors";
    case Family::NeedleHolder: return "needle-holder";
    case Family::Forceps: return "forceps";
  }
  return "unknown";
}

struct Shape {
  double length;          // overall, ring included
  double hinge_fraction;  // share of the length behind the hinge
  double blade_width;
  double curvature;       // z rise of the blade tip
  double ring_radius;
  double stack = 1.0;     // half gap between the parts along the hinge axis
};

Shape draw_shape(Family family, Rng& rng) {
  Shape s{};
  switch (family) {
    case Family::Scissors:
      s = {rng.uniform(140, 200), rng.uniform(0.42, 0.50), rng.uniform(6, 9), rng.uniform(2, 5), rng.uniform(9, 12)};
      break;
    case Family::CurvedScissors:
      s = {rng.uniform(120, 180), rng.uniform(0.45, 0.55), rng.uniform(5, 8), rng.uniform(12, 20), rng.uniform(8, 11)};
      break;
    case Family::NeedleHolder:
      s = {rng.uniform(130, 200), rng.uniform(0.60, 0.70), rng.uniform(4, 6), rng.uniform(3, 6), rng.uniform(8, 11)};
      break;
    case Family::Forceps:
      s = {rng.uniform(125, 240), rng.uniform(0.55, 0.65), rng.uniform(3, 5), rng.uniform(5, 10), rng.uniform(8, 12)};
      break;
  }
  return s;
}

// One blade-shank-ring part. `side` is +1 for part A, -1 for part B (mirrored in y).
void build_part(const Shape& s, double side, double ring_scale, Rng& rng, std::vector<Vec3>& points,
                std::array<ModelKeypoint, kKeypointCount>& keypoints, int kp_offset, Part part) {
  const double r = s.ring_radius * ring_scale;
  const double blade = s.length * (1.0 - s.hinge_fraction);
  const double shank = std::max(10.0, s.length * s.hinge_fraction - 2.0 * s.ring_radius);
  const double offset = 0.8 * s.ring_radius;  // lateral offset of the ring centre
  const double z0 = side * s.stack;

  auto blade_z = [&](double x) { return s.curvature * (x / blade) * (x / blade) + z0; };
  auto blade_w = [&](double x) { return s.blade_width * std::pow(1.0 - 0.9 * x / blade, 0.7); };
  // Blade on the +side half plane, shank crosses to the -side.
  auto shank_y = [&](double x) { return side * offset * (x / shank); };
  const Vec3 ring_centre(-shank - r, -side * (offset + 0.3 * r), z0);

  const std::array<Vec3, 6> skeleton = {
      Vec3(blade, side * 0.5, blade_z(blade)),
      Vec3(0.75 * blade, side * blade_w(0.75 * blade), blade_z(0.75 * blade)),
      Vec3(0.5 * blade, side * blade_w(0.5 * blade), blade_z(0.5 * blade)),
      Vec3(0.1 * blade, side * blade_w(0.1 * blade), blade_z(0.1 * blade)),
      Vec3(-0.5 * shank, shank_y(-0.5 * shank), z0),
      Vec3(ring_centre.x() - r, ring_centre.y(), z0),
  };
  for (int k = 0; k < 6; ++k) {
    points.push_back(skeleton[k]);
    keypoints[kp_offset + k] = {part, skeleton[k]};
  }

  while (points.size() < kSurfacePointsPerPart) {
    const double pick = rng.uniform();
    if (pick < 0.55) {
      const double x = rng.uniform(0.0, blade);
      const double y = side * rng.uniform(0.0, blade_w(x));
      points.emplace_back(x, y, blade_z(x) + rng.uniform(-0.5, 0.5));
    } else if (pick < 0.70) {
      const double x = rng.uniform(-shank, 0.0);
      points.emplace_back(x, shank_y(x) + rng.uniform(-1.5, 1.5), z0 + rng.uniform(-1.0, 1.0));
    } else {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double rr = r + rng.uniform(-1.5, 1.5);
      points.emplace_back(ring_centre.x() + rr * std::cos(a), ring_centre.y() + rr * std::sin(a),
                          z0 + rng.uniform(-1.0, 1.0));
    }
  }
}

InstrumentModel build_model(int class_id, Family family, const Shape& shape, std::uint64_t seed) {
  InstrumentModel m;
  m.class_id = class_id;
  m.name = std::string(family_name(family)) + "-" + std::to_string(class_id);
  m.hinge_point = Vec3::Zero();
  m.hinge_axis = Vec3::UnitZ();
  Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(class_id) + 1000);
  build_part(shape, +1.0, 1.0, rng, m.part_a, m.keypoints, 0, Part::A);
  build_part(shape, -1.0, 0.8, rng, m.part_b, m.keypoints, 6, Part::B);
  m.diameter = diameter(m);
  return m;
}

InstrumentModel scaled_copy(const InstrumentModel& src, int class_id, double scale) {
  InstrumentModel m = src;
  m.class_id = class_id;
  m.name = src.name + (scale < 1.0 ? "-small" : "-large");
  for (auto& p : m.part_a) p *= scale;
  for (auto& p : m.part_b) p *= scale;
  for (auto& k : m.keypoints) k.position *= scale;
  m.hinge_point *= scale;
  m.diameter = diameter(m);
  return m;
}

void write_double(std::ostream& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

void write_vec(std::ostream& out, const Vec3& v) {
  write_double(out, v.x());
  out << ' ';
  write_double(out, v.y());
  out << ' ';
  write_double(out, v.z());
}

double parse_double(const std::string& token) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size())
    throw IoFailure("model set: bad number '" + token + "'");
  return v;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::istringstream next(const std::string& expected_key) {
    std::string line;
    if (!std::getline(in_, line)) throw IoFailure("model set: unexpected end of file, wanted " + expected_key);
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key != expected_key) throw IoFailure("model set: expected '" + expected_key + "', got '" + key + "'");
    return ss;
  }

  Vec3 vec(std::istringstream& ss) {
    std::string a, b, c;
    if (!(ss >> a >> b >> c)) throw IoFailure("model set: expected three numbers");
    return {parse_double(a), parse_double(b), parse_double(c)};
  }

  std::istringstream raw() {
    std::string line;
    if (!std::getline(in_, line)) throw IoFailure("model set: unexpected end of file");
    return std::istringstream(line);
  }

 private:
  std::istream& in_;
};

}  // namespace

std::vector<Vec3> InstrumentModel::surface() const {
  std::vector<Vec3> out(part_a);
  out.insert(out.end(), part_b.begin(), part_b.end());
  return out;
}

std::vector<InstrumentModel> make_instrument_set(std::uint64_t seed, int count) {
  if (count < 1 || count > kMaxInstrumentCount) throw InvalidArgument("instrument count must be in [1, 32]");
  std::vector<InstrumentModel> models;
  models.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int slot = i % 4;
    if (slot == 3) {
      const double scale = (i / 4) % 2 == 0 ? 0.9 : 1.1;
      models.push_back(scaled_copy(models.back(), i, scale));
      continue;
    }
    Family family = Family::Forceps;
    if (slot == 0) family = (i / 4) % 2 == 0 ? Family::Scissors : Family::NeedleHolder;
    if (slot == 1) family = Family::CurvedScissors;
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
    models.push_back(build_model(i, family, draw_shape(family, rng), seed));
  }
  return models;
}

double diameter(const InstrumentModel& model) {
  if (model.surface_size() == 0) throw EmptyModel("model has no surface points");
  const std::vector<Vec3> pts = model.surface();
  return kernels::parallel::max_pairwise_distance(pts);
}

void validate_model(const InstrumentModel& model) {
  if (std::abs(model.hinge_axis.norm() - 1.0) > 1e-9) throw InvalidArgument("hinge axis is not unit length");
  int on_a = 0;
  for (const auto& kp : model.keypoints) {
    const auto& part = kp.part == Part::A ? model.part_a : model.part_b;
    const bool found = std::any_of(part.begin(), part.end(),
                                   [&](const Vec3& p) { return (p - kp.position).norm() <= 1e-9; });
    if (!found) throw InvalidArgument("keypoint is not a point of its part");
    on_a += kp.part == Part::A ? 1 : 0;
  }
  if (on_a != 6) throw InvalidArgument("model needs 6 keypoints on each part");
  if (std::abs(diameter(model) - model.diameter) > 1e-6) throw InvalidArgument("stored diameter is stale");
}

const InstrumentModel& model_for_class(const std::vector<InstrumentModel>& models, int class_id) {
  if (class_id < 0 || class_id >= static_cast<int>(models.size()))
    throw ClassOutOfRange("class id " + std::to_string(class_id) + " has no model");
  return models[class_id];
}

void write_model_set(std::ostream& out, const ModelSet& set) {
  out << "stereopose-models " << kModelSetSchemaVersion << '\n';
  out << "seed " << set.seed << '\n';
  out << "count " << set.models.size() << '\n';
  for (const auto& m : set.models) {
    out << "model " << m.class_id << ' ' << m.name << '\n';
    out << "hinge_point ";
    write_vec(out, m.hinge_point);
    out << "\nhinge_axis ";
    write_vec(out, m.hinge_axis);
    out << "\ndiameter ";
    write_double(out, m.diameter);
    out << "\nkeypoints\n";
    for (const auto& kp : m.keypoints) {
      out << (kp.part == Part::A ? 'A' : 'B') << ' ';
      write_vec(out, kp.position);
      out << '\n';
    }
    for (const auto* part : {&m.part_a, &m.part_b}) {
      out << (part == &m.part_a ? "part_a " : "part_b ") << part->size() << '\n';
      for (const auto& p : *part) {
        write_vec(out, p);
        out << '\n';
      }
    }
    out << "end_model\n";
  }
}

ModelSet read_model_set(std::istream& in) {
  LineReader reader(in);
  ModelSet set;
  int version = 0;
  reader.next("stereopose-models") >> version;
  if (version != kModelSetSchemaVersion) throw IoFailure("model set: unsupported schema version");
  reader.next("seed") >> set.seed;
  std::size_t count = 0;
  reader.next("count") >> count;
  if (count > static_cast<std::size_t>(kMaxInstrumentCount)) throw IoFailure("model set: too many models");
  for (std::size_t i = 0; i < count; ++i) {
    InstrumentModel m;
    reader.next("model") >> m.class_id >> m.name;
    auto hp = reader.next("hinge_point");
    m.hinge_point = reader.vec(hp);
    auto ha = reader.next("hinge_axis");
    m.hinge_axis = reader.vec(ha);
    std::string d;
    reader.next("diameter") >> d;
    m.diameter = parse_double(d);
    reader.next("keypoints");
    for (auto& kp : m.keypoints) {
      auto ss = reader.raw();
      std::string tag;
      ss >> tag;
      if (tag != "A" && tag != "B") throw IoFailure("model set: keypoint part must be A or B");
      kp.part = tag == "A" ? Part::A : Part::B;
      kp.position = reader.vec(ss);
    }
    for (const char* key : {"part_a", "part_b"}) {
      std::size_t n = 0;
      reader.next(key) >> n;
      auto& part = std::string(key) == "part_a" ? m.part_a : m.part_b;
      part.reserve(n);
      for (std::size_t j = 0; j < n; ++j) {
        auto ss = reader.raw();
        part.push_back(reader.vec(ss));
      }
    }
    reader.next("end_model");
    set.models.push_back(std::move(m));
  }
  return set;
}

void save_model_set(const std::filesystem::path& path, const ModelSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  write_model_set(out, set);
  if (!out) throw IoFailure("failed writing " + path.string());
}

ModelSet load_model_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  return read_model_set(in);
}

}  // namespace stereopose
