#include "stereopose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

namespace stereopose {

namespace {

constexpr double kViewMargin = 0.10;

Box enclosing_box(const std::vector<Vec2>& pts, const std::vector<bool>& use) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  bool any = false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!use[i]) continue;
    any = true;
    x0 = std::min(x0, pts[i].x());
    y0 = std::min(y0, pts[i].y());
    x1 = std::max(x1, pts[i].x());
    y1 = std::max(y1, pts[i].y());
  }
  if (!any) return {};
  const double pad = 0.05 * std::max(x1 - x0, y1 - y0) + 2.0;
  return {x0 - pad, y0 - pad, x1 + pad, y1 + pad};
}

bool inside(const CameraRig& rig, const Vec2& p, double margin) {
  const double mx = margin * rig.image_width, my = margin * rig.image_height;
  return p.x() >= -mx && p.x() < rig.image_width + mx && p.y() >= -my && p.y() < rig.image_height + my;
}

double catmull_rom(double p0, double p1, double p2, double p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

Pose7D interpolate(const std::vector<Pose7D>& knots, int spacing, int frame) {
  const int last = static_cast<int>(knots.size()) - 1;
  const int s = std::min(frame / spacing, last);
  if (s == last) return knots[last];
  const double u = static_cast<double>(frame - s * spacing) / spacing;
  const Pose7D& p0 = knots[std::max(s - 1, 0)];
  const Pose7D& p1 = knots[s];
  const Pose7D& p2 = knots[s + 1];
  const Pose7D& p3 = knots[std::min(s + 2, last)];
  const auto a0 = p0.to_array(), a1 = p1.to_array(), a2 = p2.to_array(), a3 = p3.to_array();
  std::array<double, Pose7D::kSize> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = catmull_rom(a0[i], a1[i], a2[i], a3[i], u);
  Pose7D pose = Pose7D::from_array(out);
  pose.rotation6 = matrix_to_rot6d(rot6d_to_matrix(pose.rotation6));
  pose.articulation = std::clamp(pose.articulation, 0.0, kMaxArticulation);
  return pose;
}

Pose7D perturb_knot(const Pose7D& prev, const MotionConfig& motion, const InstrumentModel& model,
                    const CameraRig& rig, Rng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Pose7D next = prev;
    for (int i = 0; i < 3; ++i) next.translation[i] += rng.normal(0.0, motion.knot_translation);
    const Vec3 aa(rng.normal(0.0, motion.knot_rotation), rng.normal(0.0, motion.knot_rotation),
                  rng.normal(0.0, motion.knot_rotation));
    const Mat3 r = axis_angle_to_matrix(aa).matrix() * rot6d_to_matrix(prev.rotation6).matrix();
    next.rotation6 = matrix_to_rot6d(r);
    next.articulation = std::clamp(prev.articulation + rng.normal(0.0, 0.2), 0.0, kMaxArticulation);
    if (next.translation.z() < 450.0 || next.translation.z() > 1300.0) continue;
    if (all_in_view(rig, apply_pose(next, model, PointSet::Keypoints))) return next;
  }
  return prev;
}

}  // namespace

void NoiseConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!(keypoint_sigma >= 0.0)) throw InvalidArgument("noise sigma must be >= 0");
  if (!prob(dropout_prob) || !prob(misclass_prob)) throw InvalidArgument("noise probabilities must be in [0, 1]");
  if (!(score_min >= 0.0 && score_min <= score_max && score_max <= 1.0))
    throw InvalidArgument("score range must satisfy 0 <= min <= max <= 1");
}

bool all_in_view(const CameraRig& rig, std::span<const Vec3> points) {
  for (const Vec3& p : points) {
    for (Eye eye : {Eye::Left, Eye::Right}) {
      const Vec3 c = to_camera_frame(rig, eye, p);
      if (!(c.z() > kMinDepth)) return false;
      if (!inside(rig, project_point(rig, eye, p), 0.0)) return false;
    }
  }
  return true;
}

Pose7D sample_pose(const PoseSampler& sampler, const InstrumentModel& model, const CameraRig& rig, Rng& rng) {
  for (int attempt = 0; attempt < sampler.max_attempts; ++attempt) {
    Pose7D pose;
    for (int i = 0; i < 3; ++i)
      pose.translation[i] = rng.uniform(sampler.min_translation[i], sampler.max_translation[i]);
    pose.rotation6 = matrix_to_rot6d(random_rotation(rng));
    pose.articulation = rng.uniform(0.0, sampler.max_articulation);
    if (all_in_view(rig, apply_pose(pose, model, PointSet::Keypoints))) return pose;
  }
  throw FrustumExhausted("no pose inside both images after " + std::to_string(sampler.max_attempts) + " attempts");
}

Pose7D sample_pose(const PoseSampler& sampler, const InstrumentModel& model, const CameraRig& rig) {
  Rng rng(sampler.seed);
  return sample_pose(sampler, model, rig, rng);
}

StereoObservation observe(const CameraRig& rig, int class_id, std::span<const Vec3> keypoints3d) {
  if (keypoints3d.size() != static_cast<std::size_t>(kKeypointCount)) throw ShapeMismatch("observe needs 12 keypoints");
  StereoObservation obs;
  obs.class_id = class_id;
  obs.score = 1.0;
  std::vector<Vec2> left(kKeypointCount), right(kKeypointCount);
  std::vector<bool> vis(kKeypointCount, false);
  for (int k = 0; k < kKeypointCount; ++k) {
    const Vec3& p = keypoints3d[k];
    if (!(p.z() > kMinDepth)) continue;
    left[k] = project_point(rig, Eye::Left, p);
    right[k] = project_point(rig, Eye::Right, p);
    vis[k] = inside(rig, left[k], kViewMargin) && inside(rig, right[k], kViewMargin);
    obs.keypoints[k] = {left[k].x(), left[k].y(), right[k].x(), right[k].y(), static_cast<bool>(vis[k])};
  }
  obs.box_left = enclosing_box(left, vis);
  obs.box_right = enclosing_box(right, vis);
  return obs;
}

StereoObservation perturb_observation(const StereoObservation& obs, const NoiseConfig& noise, int class_count,
                                      Rng& rng) {
  noise.validate();
  StereoObservation out = obs;
  const int before = obs.visible_count();
  for (auto& kp : out.keypoints) {
    if (!kp.visible) continue;
    if (noise.keypoint_sigma > 0.0) {
      kp.u_left += rng.normal(0.0, noise.keypoint_sigma);
      kp.v_left += rng.normal(0.0, noise.keypoint_sigma);
      kp.u_right += rng.normal(0.0, noise.keypoint_sigma);
      kp.v_right += rng.normal(0.0, noise.keypoint_sigma);
    }
    if (noise.dropout_prob > 0.0 && rng.bernoulli(noise.dropout_prob)) kp = StereoKeypoint{};
  }
  if (noise.keypoint_sigma > 0.0) {
    for (Box* b : {&out.box_left, &out.box_right}) {
      b->x0 += rng.normal(0.0, noise.keypoint_sigma);
      b->y0 += rng.normal(0.0, noise.keypoint_sigma);
      b->x1 += rng.normal(0.0, noise.keypoint_sigma);
      b->y1 += rng.normal(0.0, noise.keypoint_sigma);
    }
  }
  if (class_count > 1 && noise.misclass_prob > 0.0 && rng.bernoulli(noise.misclass_prob)) {
    const int other = rng.uniform_int(class_count - 1);
    out.class_id = other >= obs.class_id ? other + 1 : other;
  }
  if (before > 0) {
    const double share = static_cast<double>(out.visible_count()) / before;
    out.score = std::clamp(obs.score * share, noise.score_min, noise.score_max);
  }
  return out;
}

DatasetRecord make_record(const std::vector<InstrumentModel>& models, const CameraRig& rig,
                          const PoseSampler& sampler, std::uint64_t index, const std::optional<NoiseConfig>& noise) {
  Rng rng = Rng::stream(sampler.seed, index);
  DatasetRecord rec;
  rec.class_id = rng.uniform_int(static_cast<int>(models.size()));
  const InstrumentModel& model = models[rec.class_id];
  rec.pose = sample_pose(sampler, model, rig, rng);
  const auto kp = apply_pose(rec.pose, model, PointSet::Keypoints);
  std::copy(kp.begin(), kp.end(), rec.keypoints3d.begin());
  rec.observation = observe(rig, rec.class_id, kp);
  if (noise) rec.observation = perturb_observation(rec.observation, *noise, static_cast<int>(models.size()), rng);
  return rec;
}

std::vector<DatasetRecord> generate_records(const std::vector<InstrumentModel>& models, const CameraRig& rig,
                                            const PoseSampler& sampler, std::size_t n,
                                            const std::optional<NoiseConfig>& noise) {
  if (n == 0) throw InvalidArgument("dataset needs at least one record");
  if (models.empty()) throw InvalidArgument("dataset needs at least one model");
  rig.validate();
  if (noise) noise->validate();
  std::vector<DatasetRecord> records(n);
  // Exceptions must not escape the parallel region; keep the first one by index.
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      records[i] = make_record(models, rig, sampler, i, noise);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return records;
}

// ---------------------------------------------------------------------------

Sequence generate_sequence(const std::vector<InstrumentModel>& models, const CameraRig& rig,
                           const SequenceConfig& config) {
  if (config.n_frames < 2) throw InvalidArgument("a sequence needs at least 2 frames");
  if (config.n_objects < 1) throw InvalidArgument("a sequence needs at least one object");
  if (!config.class_ids.empty() && static_cast<int>(config.class_ids.size()) != config.n_objects)
    throw InvalidArgument("class_ids must list one class per object");
  const int class_count = static_cast<int>(models.size());

  Rng rng(config.seed);
  std::vector<int> classes = config.class_ids;
  if (classes.empty()) {
    std::vector<int> pool(class_count);
    for (int i = 0; i < class_count; ++i) pool[i] = i;
    for (int i = 0; i < config.n_objects; ++i) {
      if (pool.empty()) {
        classes.push_back(rng.uniform_int(class_count));
        continue;
      }
      const int pick = rng.uniform_int(static_cast<int>(pool.size()));
      classes.push_back(pool[pick]);
      pool.erase(pool.begin() + pick);
    }
  }

  const MotionConfig& motion = config.motion;
  std::vector<std::vector<Pose7D>> trajectories(config.n_objects);
  PoseSampler start;
  start.min_translation = {-120.0, -120.0, 550.0};
  start.max_translation = {120.0, 120.0, 1100.0};
  for (int o = 0; o < config.n_objects; ++o) {
    const InstrumentModel& model = model_for_class(models, classes[o]);
    auto& traj = trajectories[o];
    traj.reserve(config.n_frames);
    if (motion.kind == MotionKind::Crossing) {
      const double dir = o % 2 == 0 ? 1.0 : -1.0;
      const double y = (o % 2 == 0 ? -35.0 : 35.0) + 70.0 * (o / 2);
      const Mat3 r = axis_angle_to_matrix(Vec3(0.0, 0.0, rng.uniform(-0.4, 0.4))).matrix() *
                     axis_angle_to_matrix(Vec3(rng.uniform(-0.5, 0.5), 0.0, 0.0)).matrix();
      for (int f = 0; f < config.n_frames; ++f) {
        Pose7D p;
        const double s = static_cast<double>(f) / (config.n_frames - 1);
        p.translation = Vec3(dir * motion.crossing_span * (2.0 * s - 1.0), y, motion.crossing_depth);
        p.rotation6 = matrix_to_rot6d(r);
        p.articulation = 0.3;
        traj.push_back(p);
      }
      continue;
    }
    const Pose7D first = sample_pose(start, model, rig, rng);
    if (motion.kind == MotionKind::Static) {
      traj.assign(config.n_frames, first);
      continue;
    }
    const int spacing = std::max(1, motion.knot_spacing);
    const int n_knots = (config.n_frames - 1 + spacing - 1) / spacing + 1;
    std::vector<Pose7D> knots{first};
    while (static_cast<int>(knots.size()) < n_knots) knots.push_back(perturb_knot(knots.back(), motion, model, rig, rng));
    for (int f = 0; f < config.n_frames; ++f) traj.push_back(interpolate(knots, spacing, f));
  }

  Sequence seq;
  seq.config = config;
  seq.config.class_ids = classes;
  seq.frames.resize(config.n_frames);
  for (int f = 0; f < config.n_frames; ++f) {
    for (int o = 0; o < config.n_objects; ++o) {
      const InstrumentModel& model = model_for_class(models, classes[o]);
      Rng det_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(f) * 1024 + o);
      SequenceDetection det;
      det.frame = f;
      det.track_gt_id = o;
      det.record.class_id = classes[o];
      det.record.pose = trajectories[o][f];
      const auto kp = apply_pose(det.record.pose, model, PointSet::Keypoints);
      std::copy(kp.begin(), kp.end(), det.record.keypoints3d.begin());
      bool in_front = true;
      for (const auto& p : kp)
        for (Eye eye : {Eye::Left, Eye::Right}) in_front = in_front && to_camera_frame(rig, eye, p).z() > kMinDepth;
      if (!in_front) continue;
      StereoObservation obs = observe(rig, classes[o], kp);
      if (obs.visible_count() == 0) continue;
      if (config.noise) obs = perturb_observation(obs, *config.noise, class_count, det_rng);
      for (const auto& w : config.occlusions) {
        if (w.object != o || f < w.first_frame || f > w.last_frame) continue;
        obs.score = w.score;
        if (w.dropout > 0.0)
          for (auto& k : obs.keypoints)
            if (k.visible && det_rng.bernoulli(w.dropout)) k = StereoKeypoint{};
      }
      det.record.observation = obs;
      seq.frames[f].push_back(det);
    }
  }
  return seq;
}

}  // namespace stereopose
