#include "stereopose/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace stereopose {

namespace {

using nlohmann::json;

json rig_json(const CameraRig& rig) {
  return {{"fx", rig.fx}, {"fy", rig.fy}, {"cx", rig.cx}, {"cy", rig.cy},
          {"image_width", rig.image_width}, {"image_height", rig.image_height}, {"baseline", rig.baseline}};
}

CameraRig rig_from(const json& j) {
  CameraRig rig;
  rig.fx = j.at("fx");
  rig.fy = j.at("fy");
  rig.cx = j.at("cx");
  rig.cy = j.at("cy");
  rig.image_width = j.at("image_width");
  rig.image_height = j.at("image_height");
  rig.baseline = j.at("baseline");
  rig.validate();
  return rig;
}

json noise_json(const std::optional<NoiseConfig>& noise) {
  if (!noise) return nullptr;
  return {{"keypoint_sigma", noise->keypoint_sigma}, {"dropout_prob", noise->dropout_prob},
          {"misclass_prob", noise->misclass_prob}, {"score_min", noise->score_min},
          {"score_max", noise->score_max}};
}

std::optional<NoiseConfig> noise_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  NoiseConfig n;
  n.keypoint_sigma = j.at("keypoint_sigma");
  n.dropout_prob = j.at("dropout_prob");
  n.misclass_prob = j.at("misclass_prob");
  n.score_min = j.at("score_min");
  n.score_max = j.at("score_max");
  n.validate();
  return n;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

const char* motion_name(MotionKind k) {
  switch (k) {
    case MotionKind::Static: return "static";
    case MotionKind::Crossing: return "crossing";
    default: return "smooth";
  }
}

MotionKind motion_from(const std::string& s) {
  if (s == "static") return MotionKind::Static;
  if (s == "crossing") return MotionKind::Crossing;
  if (s == "smooth") return MotionKind::Smooth;
  throw IoFailure("unknown motion kind '" + s + "'");
}

void put(std::string& line, double v) {
  line += ' ';
  line += format_number(v);
}

void put(std::string& line, long long v) {
  line += ' ';
  line += std::to_string(v);
}

void append_record(std::string& line, const DatasetRecord& r) {
  line += std::to_string(r.class_id);
  for (double v : r.pose.to_array()) put(line, v);
  for (const auto& k : r.observation.keypoints) {
    put(line, k.u_left);
    put(line, k.v_left);
    put(line, k.u_right);
    put(line, k.v_right);
    put(line, static_cast<long long>(k.visible ? 1 : 0));
  }
  for (const auto& p : r.keypoints3d)
    for (int i = 0; i < 3; ++i) put(line, p[i]);
  put(line, static_cast<long long>(r.observation.class_id));
  put(line, r.observation.score);
  for (const Box& b : {r.observation.box_left, r.observation.box_right}) {
    put(line, b.x0);
    put(line, b.y0);
    put(line, b.x1);
    put(line, b.y1);
  }
}

class Fields {
 public:
  Fields(const std::string& line, std::size_t line_no) : p_(line.data()), end_(line.data() + line.size()), no_(line_no) {}

  double number() {
    skip();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(p_, end_, v);
    if (ec != std::errc()) fail();
    p_ = ptr;
    return v;
  }
  long long integer() {
    skip();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(p_, end_, v);
    if (ec != std::errc()) fail();
    p_ = ptr;
    return v;
  }
  void finish() {
    skip();
    if (p_ != end_) fail();
  }

 private:
  void skip() {
    while (p_ != end_ && (*p_ == ' ' || *p_ == '\t' || *p_ == '\r')) ++p_;
  }
  [[noreturn]] void fail() const { throw IoFailure("malformed record on line " + std::to_string(no_)); }

  const char* p_;
  const char* end_;
  std::size_t no_;
};

DatasetRecord parse_record(Fields& f) {
  DatasetRecord r;
  r.class_id = static_cast<int>(f.integer());
  std::array<double, Pose7D::kSize> pose{};
  for (double& v : pose) v = f.number();
  r.pose = Pose7D::from_array(pose);
  for (auto& k : r.observation.keypoints) {
    k.u_left = f.number();
    k.v_left = f.number();
    k.u_right = f.number();
    k.v_right = f.number();
    k.visible = f.integer() != 0;
  }
  for (auto& p : r.keypoints3d)
    for (int i = 0; i < 3; ++i) p[i] = f.number();
  r.observation.class_id = static_cast<int>(f.integer());
  r.observation.score = f.number();
  for (Box* b : {&r.observation.box_left, &r.observation.box_right}) {
    b->x0 = f.number();
    b->y0 = f.number();
    b->x1 = f.number();
    b->y1 = f.number();
  }
  return r;
}

json read_header(std::istream& in, const std::string& magic, int schema) {
  std::string line;
  if (!std::getline(in, line)) throw IoFailure("missing " + magic + " header");
  std::istringstream hs(line);
  std::string tag;
  int version = 0;
  hs >> tag >> version;
  if (tag != magic) throw IoFailure("expected '" + magic + "' header, got '" + tag + "'");
  if (version != schema) throw IoFailure(magic + " schema " + std::to_string(version) + " is not supported");
  std::string rest;
  std::getline(hs, rest);
  try {
    return json::parse(rest);
  } catch (const json::exception& e) {
    throw IoFailure(std::string("bad header: ") + e.what());
  }
}

template <typename F>
void with_output(const std::filesystem::path& path, F&& write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
  write(out);
  out.flush();
  if (!out) throw IoFailure("write to '" + path.string() + "' failed");
}

template <typename F>
auto with_input(const std::filesystem::path& path, F&& read) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open '" + path.string() + "'");
  return read(in);
}

}  // namespace

std::string format_number(double value, int digits) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, digits);
  if (ec != std::errc()) throw IoFailure("number formatting failed");
  return std::string(buf, ptr);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  const DatasetHeader& h = data.header;
  json header = {{"rig", rig_json(h.rig)},
                 {"seed", h.seed},
                 {"n", data.records.size()},
                 {"noise", noise_json(h.noise)},
                 {"model_seed", h.model_seed},
                 {"model_count", h.model_count},
                 {"sampler",
                  {{"min_translation", vec_json(h.sampler.min_translation)},
                   {"max_translation", vec_json(h.sampler.max_translation)},
                   {"max_articulation", h.sampler.max_articulation},
                   {"max_attempts", h.sampler.max_attempts}}}};
  out << "stereopose-dataset " << kDatasetSchemaVersion << ' ' << header.dump() << '\n';
  std::string line;
  for (const auto& r : data.records) {
    line.clear();
    append_record(line, r);
    line += '\n';
    out << line;
  }
  if (!out) throw IoFailure("dataset write failed");
}

Dataset read_dataset(std::istream& in) {
  const json header = read_header(in, "stereopose-dataset", kDatasetSchemaVersion);
  Dataset data;
  DatasetHeader& h = data.header;
  try {
    h.rig = rig_from(header.at("rig"));
    h.seed = header.at("seed");
    h.n = header.at("n");
    h.noise = noise_from(header.at("noise"));
    h.model_seed = header.at("model_seed");
    h.model_count = header.at("model_count");
    const json& s = header.at("sampler");
    h.sampler.min_translation = vec_from(s.at("min_translation"));
    h.sampler.max_translation = vec_from(s.at("max_translation"));
    h.sampler.max_articulation = s.at("max_articulation");
    h.sampler.max_attempts = s.at("max_attempts");
    h.sampler.seed = h.seed;
  } catch (const json::exception& e) {
    throw IoFailure(std::string("bad dataset header: ") + e.what());
  }
  data.records.reserve(h.n);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Fields f(line, line_no);
    data.records.push_back(parse_record(f));
    f.finish();
  }
  if (data.records.size() != h.n)
    throw IoFailure("dataset declares " + std::to_string(h.n) + " records but holds " +
                    std::to_string(data.records.size()));
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  with_output(path, [&](std::ostream& out) { write_dataset(out, data); });
}

Dataset load_dataset(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& in) { return read_dataset(in); });
}

Dataset generate_dataset(const std::vector<InstrumentModel>& models, std::uint64_t model_seed, const CameraRig& rig,
                         const PoseSampler& sampler, std::size_t n, const std::optional<NoiseConfig>& noise) {
  Dataset data;
  data.header.rig = rig;
  data.header.seed = sampler.seed;
  data.header.n = n;
  data.header.noise = noise;
  data.header.model_seed = model_seed;
  data.header.model_count = static_cast<int>(models.size());
  data.header.sampler = sampler;
  data.records = generate_records(models, rig, sampler, n, noise);
  return data;
}

void write_sequence(std::ostream& out, const SequenceFile& seq) {
  const SequenceConfig& c = seq.sequence.config;
  json occlusions = json::array();
  for (const auto& w : c.occlusions)
    occlusions.push_back({{"object", w.object}, {"first_frame", w.first_frame}, {"last_frame", w.last_frame},
                          {"score", w.score}, {"dropout", w.dropout}});
  json header = {{"rig", rig_json(seq.rig)},
                 {"model_seed", seq.model_seed},
                 {"model_count", seq.model_count},
                 {"seed", c.seed},
                 {"n_frames", c.n_frames},
                 {"n_objects", c.n_objects},
                 {"frame_rate", c.frame_rate},
                 {"class_ids", c.class_ids},
                 {"noise", noise_json(c.noise)},
                 {"occlusions", occlusions},
                 {"motion",
                  {{"kind", motion_name(c.motion.kind)},
                   {"knot_spacing", c.motion.knot_spacing},
                   {"knot_translation", c.motion.knot_translation},
                   {"knot_rotation", c.motion.knot_rotation},
                   {"crossing_depth", c.motion.crossing_depth},
                   {"crossing_span", c.motion.crossing_span}}}};
  out << "stereopose-sequence " << kSequenceSchemaVersion << ' ' << header.dump() << '\n';
  std::string line;
  for (const auto& frame : seq.sequence.frames) {
    for (const auto& d : frame) {
      line = std::to_string(d.frame) + ' ' + std::to_string(d.track_gt_id) + ' ';
      append_record(line, d.record);
      line += '\n';
      out << line;
    }
  }
  if (!out) throw IoFailure("sequence write failed");
}

SequenceFile read_sequence(std::istream& in) {
  const json header = read_header(in, "stereopose-sequence", kSequenceSchemaVersion);
  SequenceFile seq;
  SequenceConfig& c = seq.sequence.config;
  try {
    seq.rig = rig_from(header.at("rig"));
    seq.model_seed = header.at("model_seed");
    seq.model_count = header.at("model_count");
    c.seed = header.at("seed");
    c.n_frames = header.at("n_frames");
    c.n_objects = header.at("n_objects");
    c.frame_rate = header.at("frame_rate");
    c.class_ids = header.at("class_ids").get<std::vector<int>>();
    c.noise = noise_from(header.at("noise"));
    for (const auto& w : header.at("occlusions"))
      c.occlusions.push_back({w.at("object"), w.at("first_frame"), w.at("last_frame"), w.at("score"), w.at("dropout")});
    const json& m = header.at("motion");
    c.motion.kind = motion_from(m.at("kind"));
    c.motion.knot_spacing = m.at("knot_spacing");
    c.motion.knot_translation = m.at("knot_translation");
    c.motion.knot_rotation = m.at("knot_rotation");
    c.motion.crossing_depth = m.at("crossing_depth");
    c.motion.crossing_span = m.at("crossing_span");
  } catch (const json::exception& e) {
    throw IoFailure(std::string("bad sequence header: ") + e.what());
  }
  if (c.n_frames < 1) throw IoFailure("sequence has no frames");
  seq.sequence.frames.resize(c.n_frames);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Fields f(line, line_no);
    SequenceDetection d;
    d.frame = static_cast<int>(f.integer());
    d.track_gt_id = static_cast<int>(f.integer());
    d.record = parse_record(f);
    f.finish();
    if (d.frame < 0 || d.frame >= c.n_frames) throw IoFailure("frame index out of range on line " + std::to_string(line_no));
    seq.sequence.frames[d.frame].push_back(d);
  }
  return seq;
}

void save_sequence(const std::filesystem::path& path, const SequenceFile& seq) {
  with_output(path, [&](std::ostream& out) { write_sequence(out, seq); });
}

SequenceFile load_sequence(const std::filesystem::path& path) {
  return with_input(path, [](std::istream& in) { return read_sequence(in); });
}

}  // namespace stereopose
