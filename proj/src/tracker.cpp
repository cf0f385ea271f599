#include "stereopose/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "stereopose/assignment.hpp"
#include "stereopose/dataset_io.hpp"

namespace stereopose {

double one_euro_alpha(double cutoff, double period) {
  const double tau = 1.0 / (2.0 * std::numbers::pi * cutoff);
  return 1.0 / (1.0 + tau / period);
}

double one_euro_step(OneEuroState& s, double x, double t, const OneEuroConfig& cfg) {
  if (!s.initialized) {
    s = {true, x, 0.0, t};
    return x;
  }
  if (!(t > s.t_prev)) throw NonMonotonicTime("sample time " + std::to_string(t) + " does not advance");
  const double period = t - s.t_prev;
  const double dx = (x - s.x_hat) / period;
  const double ad = one_euro_alpha(cfg.d_cutoff, period);
  s.dx_hat += ad * (dx - s.dx_hat);
  const double a = one_euro_alpha(cfg.min_cutoff + cfg.beta * std::abs(s.dx_hat), period);
  s.x_hat += a * (x - s.x_hat);
  s.t_prev = t;
  return s.x_hat;
}

Box KalmanState::box() const { return Box::from_center(x[0], x[1], x[2], x[3]); }

KalmanState kalman_init(const Box& box, const KalmanConfig& cfg) {
  KalmanState s;
  const Vec2 c = box.center();
  s.x << c.x(), c.y(), box.width(), box.height(), 0, 0, 0, 0;
  s.p.setZero();
  s.p.diagonal() << KalmanVector::Constant(cfg.init_position_var).head<4>(),
      KalmanVector::Constant(cfg.init_velocity_var).head<4>();
  return s;
}

Box kalman_predict(KalmanState& s, const KalmanConfig& cfg) {
  KalmanMatrix f = KalmanMatrix::Identity();
  f.topRightCorner<4, 4>().setIdentity();
  s.x = f * s.x;
  s.p = f * s.p * f.transpose();
  s.p.diagonal().head<4>().array() += cfg.q_position;
  s.p.diagonal().tail<4>().array() += cfg.q_velocity;
  return s.box();
}

void kalman_update(KalmanState& s, const Box& measured, double r_noise) {
  using Mat4 = Eigen::Matrix4d;
  using Mat48 = Eigen::Matrix<double, 4, 8>;
  Mat48 h = Mat48::Zero();
  h.leftCols<4>().setIdentity();
  const Vec2 c = measured.center();
  const Eigen::Vector4d z(c.x(), c.y(), measured.width(), measured.height());

  Mat4 innov = h * s.p * h.transpose() + r_noise * Mat4::Identity();
  Eigen::LLT<Mat4> llt(innov);
  if (llt.info() != Eigen::Success) {
    innov = 0.5 * (innov + innov.transpose()) + 1e-6 * Mat4::Identity();
    llt.compute(innov);
    if (llt.info() != Eigen::Success) throw SingularInnovation("innovation covariance is not positive-definite");
  }
  const Eigen::Matrix<double, 8, 4> gain = llt.solve(h * s.p).transpose();
  s.x += gain * (z - h * s.x);
  const KalmanMatrix ikh = KalmanMatrix::Identity() - gain * h;
  s.p = ikh * s.p * ikh.transpose() + r_noise * gain * gain.transpose();
  s.p = 0.5 * (s.p + s.p.transpose());
  s.x[2] = std::max(s.x[2], 1.0);
  s.x[3] = std::max(s.x[3], 1.0);
}

void TrackerConfig::validate() const {
  if (!(score_low >= 0.0 && score_low < score_high && score_high <= 1.0))
    throw InvalidArgument("need 0 <= score_low < score_high <= 1");
  if (!(iou_first > 0.0 && iou_first < 1.0 && iou_second > 0.0 && iou_second < 1.0))
    throw InvalidArgument("IoU thresholds must lie in (0, 1)");
  if (max_age < 0) throw InvalidArgument("max_age must be >= 0");
  if (!(one_euro.min_cutoff > 0.0 && one_euro.d_cutoff > 0.0 && one_euro.rate > 0.0 && one_euro.beta >= 0.0))
    throw InvalidArgument("one-euro cutoffs and rate must be > 0");
}

namespace {

void match_stage(std::span<const Box> track_boxes, std::span<const Detection2D> dets,
                 const std::vector<std::size_t>& tracks, const std::vector<std::size_t>& cands, double threshold,
                 std::vector<std::pair<std::size_t, std::size_t>>& matches, std::vector<bool>& track_used,
                 std::vector<bool>& det_used) {
  if (tracks.empty() || cands.empty()) return;
  std::vector<double> w(tracks.size() * cands.size(), 0.0);
  for (std::size_t i = 0; i < tracks.size(); ++i)
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const double o = iou(track_boxes[tracks[i]], dets[cands[j]].box);
      if (o >= threshold) w[i * cands.size() + j] = o;
    }
  for (const auto& [i, j] : max_weight_matching(w, tracks.size(), cands.size())) {
    matches.emplace_back(tracks[i], cands[j]);
    track_used[tracks[i]] = true;
    det_used[cands[j]] = true;
  }
}

}  // namespace

Association associate(std::span<const Box> track_boxes, std::span<const Detection2D> detections,
                      const TrackerConfig& cfg) {
  std::vector<std::size_t> high, low, all_tracks(track_boxes.size());
  for (std::size_t i = 0; i < all_tracks.size(); ++i) all_tracks[i] = i;
  for (std::size_t j = 0; j < detections.size(); ++j) {
    if (detections[j].score >= cfg.score_high)
      high.push_back(j);
    else if (detections[j].score >= cfg.score_low)
      low.push_back(j);
  }
  Association a;
  std::vector<bool> track_used(track_boxes.size(), false), det_used(detections.size(), false);
  match_stage(track_boxes, detections, all_tracks, high, cfg.iou_first, a.matches, track_used, det_used);

  std::vector<std::size_t> remaining;
  for (std::size_t i = 0; i < track_boxes.size(); ++i)
    if (!track_used[i]) remaining.push_back(i);
  match_stage(track_boxes, detections, remaining, low, cfg.iou_second, a.matches, track_used, det_used);

  std::sort(a.matches.begin(), a.matches.end());
  for (std::size_t i = 0; i < track_boxes.size(); ++i)
    if (!track_used[i]) a.unmatched_tracks.push_back(i);
  for (std::size_t j : high)
    if (!det_used[j]) a.new_tracks.push_back(j);
  return a;
}

int vote_winner(std::span<const double> votes) {
  if (votes.empty()) throw EmptyInput("no class votes");
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

TrackerSession::TrackerSession(const TrackerConfig& cfg, int class_count) : cfg_(cfg), class_count_(class_count) {
  cfg_.validate();
  if (class_count < 1) throw InvalidArgument("class_count must be >= 1");
}

std::vector<TrackOutput> TrackerSession::step(int frame, std::span<const Detection2D> detections) {
  if (frame <= last_frame_)
    throw NonMonotonicTime("frame " + std::to_string(frame) + " after frame " + std::to_string(last_frame_));
  for (const auto& d : detections)
    if (d.class_id < 0 || d.class_id >= class_count_)
      throw ClassOutOfRange("detection class " + std::to_string(d.class_id));
  const int elapsed = last_frame_ < 0 ? 1 : frame - last_frame_;
  last_frame_ = frame;
  const double t = frame / cfg_.one_euro.rate;

  std::vector<Box> predicted;
  predicted.reserve(tracks_.size());
  for (auto& tr : tracks_) {
    Box b;
    for (int i = 0; i < elapsed; ++i) b = kalman_predict(tr.kalman, cfg_.kalman);
    predicted.push_back(b);
    tr.age += elapsed;
    tr.time_since_update += elapsed;
  }

  const Association a = associate(predicted, detections, cfg_);
  std::vector<std::pair<std::size_t, std::size_t>> updated;  // (track, detection)

  auto absorb = [&](Track& tr, const Detection2D& d) {
    tr.class_votes[d.class_id] += 1.0;
    tr.score = d.score;
    tr.time_since_update = 0;
    for (int k = 0; k < kKeypointCount; ++k) {
      const auto& kp = d.keypoints[k];
      if (!kp.visible) {
        tr.keypoints[k].visible = false;
        continue;
      }
      tr.keypoints[k] = {one_euro_step(tr.smoothers[2 * k], kp.u, t, cfg_.one_euro),
                         one_euro_step(tr.smoothers[2 * k + 1], kp.v, t, cfg_.one_euro), true};
    }
  };

  for (const auto& [ti, dj] : a.matches) {
    kalman_update(tracks_[ti].kalman, detections[dj].box, cfg_.kalman.measurement_noise);
    absorb(tracks_[ti], detections[dj]);
    updated.emplace_back(ti, dj);
  }
  for (std::size_t dj : a.new_tracks) {
    Track tr;
    tr.id = next_id_++;
    tr.kalman = kalman_init(detections[dj].box, cfg_.kalman);
    tr.class_votes.assign(class_count_, 0.0);
    absorb(tr, detections[dj]);
    tracks_.push_back(std::move(tr));
    updated.emplace_back(tracks_.size() - 1, dj);
  }

  std::vector<TrackOutput> out;
  for (const auto& [ti, dj] : updated) {
    const Track& tr = tracks_[ti];
    TrackOutput o;
    o.track_id = tr.id;
    o.class_id = vote_winner(tr.class_votes);
    o.detection = dj;
    o.smoothed.class_id = o.class_id;
    o.smoothed.box = tr.kalman.box();
    o.smoothed.score = tr.score;
    o.smoothed.keypoints = tr.keypoints;
    out.push_back(o);
  }
  std::sort(out.begin(), out.end(), [](const TrackOutput& x, const TrackOutput& y) { return x.track_id < y.track_id; });

  std::erase_if(tracks_, [&](const Track& tr) { return tr.time_since_update > cfg_.max_age; });
  return out;
}

StereoTracker::StereoTracker(const CameraRig& rig, const TrackerConfig& cfg, int class_count,
                             const EpipolarConfig& epipolar)
    : rig_(rig), epipolar_(epipolar), left_(cfg, class_count), right_(cfg, class_count) {}

std::vector<TrackedObject> StereoTracker::track_frame(int frame, std::span<const Detection2D> left,
                                                      std::span<const Detection2D> right) {
  const auto lo = left_.step(frame, left);
  const auto ro = right_.step(frame, right);
  std::vector<Detection2D> ld, rd;
  for (const auto& o : lo) ld.push_back(o.smoothed);
  for (const auto& o : ro) rd.push_back(o.smoothed);

  auto votes_of = [](const TrackerSession& s, int id) -> const std::vector<double>& {
    for (const auto& tr : s.tracks())
      if (tr.id == id) return tr.class_votes;
    throw InvalidArgument("unknown track " + std::to_string(id));
  };

  std::vector<TrackedObject> out;
  for (const auto& [i, j] : epipolar_match(ld, rd, rig_, epipolar_)) {
    TrackedObject t;
    t.track_id = lo[i].track_id;
    t.right_track_id = ro[j].track_id;
    t.left_detection = lo[i].detection;
    t.right_detection = ro[j].detection;
    std::vector<double> votes = votes_of(left_, t.track_id);
    const auto& rv = votes_of(right_, t.right_track_id);
    for (std::size_t c = 0; c < votes.size(); ++c) votes[c] += rv[c];
    t.class_id = vote_winner(votes);

    StereoObservation& obs = t.observation;
    obs.class_id = t.class_id;
    obs.box_left = ld[i].box;
    obs.box_right = rd[j].box;
    obs.score = std::min(ld[i].score, rd[j].score);
    for (int k = 0; k < kKeypointCount; ++k) {
      const auto& a = ld[i].keypoints[k];
      const auto& b = rd[j].keypoints[k];
      obs.keypoints[k] = {a.u, a.v, b.u, b.v, a.visible && b.visible};
    }
    out.push_back(t);
  }
  return out;
}

std::vector<FrameTracks> track_sequence(const Sequence& sequence, const CameraRig& rig, const TrackerConfig& cfg,
                                        int class_count) {
  StereoTracker tracker(rig, cfg, class_count);
  std::vector<FrameTracks> out;
  for (std::size_t f = 0; f < sequence.frames.size(); ++f) {
    FrameTracks ft;
    ft.frame = static_cast<int>(f);
    std::vector<Detection2D> left, right;
    for (const auto& det : sequence.frames[f]) {
      left.push_back(left_view(det.record.observation));
      right.push_back(right_view(det.record.observation));
      ft.detection_gt_ids.push_back(det.track_gt_id);
    }
    ft.objects = tracker.track_frame(ft.frame, left, right);
    out.push_back(std::move(ft));
  }
  return out;
}

void write_tracks_csv(std::ostream& out, std::span<const FrameTracks> frames) {
  out << "frame,track_id,class";
  for (int k = 0; k < kKeypointCount; ++k) out << ",u_left" << k << ",v_left" << k << ",u_right" << k << ",v_right" << k;
  out << '\n';
  for (const auto& f : frames)
    for (const auto& o : f.objects) {
      out << f.frame << ',' << o.track_id << ',' << o.class_id;
      for (const auto& kp : o.observation.keypoints) {
        if (kp.visible)
          out << ',' << format_number(kp.u_left) << ',' << format_number(kp.v_left) << ',' << format_number(kp.u_right)
              << ',' << format_number(kp.v_right);
        else
          out << ",nan,nan,nan,nan";
      }
      out << '\n';
    }
}

}  // namespace stereopose
