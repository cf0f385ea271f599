#include "stereopose/fitter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

#include "stereopose/dataset_io.hpp"
#include "stereopose/rng.hpp"

namespace stereopose {

namespace {

constexpr double kRotationEps = 1e-8;
// Pixels of penalty per millimetre a keypoint sits behind the near plane.
constexpr double kBarrierWeight = 10.0;

struct AdamState {
  std::array<double, Pose7D::kSize> m{}, v{};
  int t = 0;
};

std::array<double, Pose7D::kSize> to_internal(const Pose7D& p, double unit) {
  auto a = p.to_array();
  for (int i = 0; i < 3; ++i) a[i] /= unit;
  return a;
}

Pose7D from_internal(const std::array<double, Pose7D::kSize>& a, double unit) {
  Pose7D p = Pose7D::from_array(a);
  p.translation *= unit;
  return p;
}

// Orthonormal rotation and clamped articulation; the optimizer works on the projected point.
Pose7D project_valid(Pose7D p) {
  p.rotation6 = matrix_to_rot6d(rot6d_to_matrix_smooth(p.rotation6, kRotationEps));
  p.articulation = std::clamp(p.articulation, 0.0, kMaxArticulation);
  return p;
}

int visible_count(const StereoObservation& obs) {
  int n = 0;
  for (const auto& k : obs.keypoints) n += k.visible ? 1 : 0;
  return n;
}

Vec3 triangulated_centroid(const StereoObservation& obs, const CameraRig& rig) {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (const auto& k : obs.keypoints) {
    if (!k.visible || k.u_left - k.u_right <= kMinDisparity) continue;
    sum += triangulate(rig, {k.u_left, k.v_left}, {k.u_right, k.v_right});
    ++n;
  }
  return n > 0 ? Vec3(sum / n) : Vec3(0.0, 0.0, 900.0);
}

struct Descent {
  Pose7D best;
  double best_px = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

Descent descend(Pose7D start, const StereoObservation& obs, const InstrumentModel& model, const CameraRig& rig,
                const FitConfig& cfg, int iters, bool early_stop, bool decay) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  Descent d;
  AdamState adam;
  Pose7D pose = project_valid(start);
  auto consider = [&](const Pose7D& p, const ReprojectionResult& r) {
    if (r.loss < d.best_loss) {
      d.best_loss = r.loss;
      d.best_px = r.mean_px;
      d.best = p;
    }
  };
  for (int it = 0; it <= iters; ++it) {
    const ReprojectionResult r = reprojection_loss(pose, obs, model, rig);
    consider(pose, r);
    if (early_stop && r.mean_px < cfg.early_stop_px) break;
    if (it == iters) break;
    const double lr = decay ? cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * it / iters)) : cfg.lr;
    auto x = to_internal(pose, cfg.translation_unit);
    ++adam.t;
    const double c1 = 1.0 - std::pow(kBeta1, adam.t), c2 = 1.0 - std::pow(kBeta2, adam.t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = r.gradient[i] * (i < 3 ? cfg.translation_unit : 1.0);
      adam.m[i] = kBeta1 * adam.m[i] + (1.0 - kBeta1) * g;
      adam.v[i] = kBeta2 * adam.v[i] + (1.0 - kBeta2) * g * g;
      x[i] -= lr * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + kEps);
    }
    pose = project_valid(from_internal(x, cfg.translation_unit));
    ++d.iterations;
  }
  return d;
}

}  // namespace

void FitConfig::validate() const {
  if (init_iters < 1 || track_iters < 1) throw InvalidArgument("iteration budgets must be >= 1");
  if (!(early_stop_px > 0.0)) throw InvalidArgument("early_stop_px must be > 0");
  if (!(lr > 0.0) || !(translation_unit > 0.0)) throw InvalidArgument("lr and translation_unit must be > 0");
  if (restarts < 1) throw InvalidArgument("restarts must be >= 1");
}

ReprojectionResult reprojection_loss(const Pose7D& pose, const StereoObservation& obs, const InstrumentModel& model,
                                     const CameraRig& rig) {
  const int n_vis = visible_count(obs);
  if (n_vis < kMinFitKeypoints)
    throw TooFewKeypoints(std::to_string(n_vis) + " visible keypoints, need " + std::to_string(kMinFitKeypoints));

  GramSchmidtCache gs;
  const Mat3 r = rot6d_to_matrix_smooth(pose.rotation6, kRotationEps, &gs);
  const auto pts = apply_pose(r, pose.translation, pose.articulation, model, PointSet::Keypoints);

  ReprojectionResult out;
  std::vector<Vec3> point_grads(pts.size(), Vec3::Zero());
  const double per_point = 0.5 / n_vis;  // 1/2 * sum over eyes of the mean over keypoints
  double px_sum = 0.0;
  for (int k = 0; k < kKeypointCount; ++k) {
    const auto& kp = obs.keypoints[k];
    if (!kp.visible) continue;
    for (Eye eye : {Eye::Left, Eye::Right}) {
      const Vec3 c = to_camera_frame(rig, eye, pts[k]);
      const bool behind = c.z() < kMinDepth;
      const double z = behind ? kMinDepth : c.z();
      const double u = rig.fx * c.x() / z + rig.cx;
      const double v = rig.fy * c.y() / z + rig.cy;
      const double du = u - (eye == Eye::Left ? kp.u_left : kp.u_right);
      const double dv = v - (eye == Eye::Left ? kp.v_left : kp.v_right);
      const double e = std::hypot(du, dv);
      px_sum += e;
      out.loss += per_point * e;
      Vec3 g = Vec3::Zero();
      if (e > 0.0) {
        const double gu = per_point * du / e, gv = per_point * dv / e;
        g.x() = gu * rig.fx / z;
        g.y() = gv * rig.fy / z;
        if (!behind) g.z() = -(gu * rig.fx * c.x() + gv * rig.fy * c.y()) / (z * z);
      }
      if (behind) {
        out.loss += kBarrierWeight * (kMinDepth - c.z());
        g.z() -= kBarrierWeight;
      }
      // Both camera frames differ from the world frame by a translation only.
      point_grads[k] += g;
    }
  }
  out.mean_px = px_sum / (2.0 * n_vis);

  PoseGradient pg;
  apply_pose_backward(r, pose.articulation, model, PointSet::Keypoints, point_grads, pg);
  const Rot6 dr = rot6d_backward(gs, pg.rotation);
  for (int i = 0; i < 3; ++i) out.gradient[i] = pg.translation[i];
  for (int i = 0; i < 6; ++i) out.gradient[3 + i] = dr[i];
  out.gradient[9] = pg.articulation;
  return out;
}

FitResult fit_pose(const std::optional<Pose7D>& init, const StereoObservation& obs, const InstrumentModel& model,
                   const CameraRig& rig, const FitConfig& config, FitMode mode) {
  config.validate();
  if (visible_count(obs) < kMinFitKeypoints)
    throw TooFewKeypoints(std::to_string(visible_count(obs)) + " visible keypoints, need " +
                          std::to_string(kMinFitKeypoints));

  if (mode == FitMode::TrackFrame) {
    if (!init) throw InvalidArgument("track-frame fitting needs an initial pose");
    const Descent d = descend(*init, obs, model, rig, config, config.track_iters, true, false);
    return {d.best, d.iterations, d.best_px};
  }

  const Vec3 centroid = triangulated_centroid(obs, rig);
  std::vector<Descent> runs(config.restarts);
  std::vector<std::exception_ptr> errors(config.restarts);
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < config.restarts; ++r) {
    try {
      Pose7D start;
      if (r == 0 && init) {
        start = *init;
      } else {
        Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(r));
        start.translation = centroid;
        start.rotation6 = matrix_to_rot6d(random_rotation(rng));
        start.articulation = kMaxArticulation / 2.0;
      }
      runs[r] = descend(start, obs, model, rig, config, config.init_iters, false, config.init_lr_decay);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  FitResult best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (const auto& d : runs) {
    best.iterations += d.iterations;
    if (d.best_loss < best_loss) {
      best_loss = d.best_loss;
      best.pose = d.best;
      best.loss_px = d.best_px;
    }
  }
  return best;
}

std::vector<FrameFit> fit_sequence(const Sequence& sequence, const std::vector<InstrumentModel>& models,
                                   const CameraRig& rig, const FitConfig& config) {
  config.validate();
  std::vector<FrameFit> out;
  std::map<int, Pose7D> previous;
  for (const auto& frame : sequence.frames) {
    for (const auto& det : frame) {
      const StereoObservation& obs = det.record.observation;
      if (visible_count(obs) < kMinFitKeypoints) continue;
      FrameFit f;
      f.frame = det.frame;
      f.track_id = det.track_gt_id;
      f.class_id = obs.class_id;
      const auto prev = previous.find(det.track_gt_id);
      f.mode = prev == previous.end() ? FitMode::InitFrame : FitMode::TrackFrame;
      FitConfig cfg = config;
      cfg.seed = splitmix64(config.seed ^ static_cast<std::uint64_t>(det.track_gt_id));
      const auto start = std::chrono::steady_clock::now();
      f.fit = fit_pose(f.mode == FitMode::TrackFrame ? std::optional<Pose7D>(prev->second) : std::nullopt, obs,
                       model_for_class(models, obs.class_id), rig, cfg, f.mode);
      f.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      previous[det.track_gt_id] = f.fit.pose;
      out.push_back(f);
    }
  }
  return out;
}

void write_fit_csv(std::ostream& out, std::span<const FrameFit> fits) {
  out << "frame,track_id,class,tx,ty,tz,r0,r1,r2,r3,r4,r5,articulation,loss_px,iters\n";
  for (const auto& f : fits) {
    out << f.frame << ',' << f.track_id << ',' << f.class_id;
    for (double v : f.fit.pose.to_array()) out << ',' << format_number(v);
    out << ',' << format_number(f.fit.loss_px) << ',' << f.fit.iterations << '\n';
  }
}

void write_fit_timing_csv(std::ostream& out, std::span<const FrameFit> fits) {
  out << "frame,track_id,mode,millis\n";
  for (const auto& f : fits)
    out << f.frame << ',' << f.track_id << ',' << (f.mode == FitMode::InitFrame ? "init" : "track") << ','
        << format_number(f.millis, 6) << '\n';
}

}  // namespace stereopose
