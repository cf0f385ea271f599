#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "stereopose/geometry.hpp"
#include "stereopose/synth.hpp"

namespace stereopose {

struct OneEuroConfig {
  double min_cutoff = 1.0;  // Hz
  double beta = 0.007;
  double d_cutoff = 1.0;  // Hz
  double rate = 30.0;     // Hz, converts frame indices to seconds
};

struct OneEuroState {
  bool initialized = false;
  double x_hat = 0.0;
  double dx_hat = 0.0;
  double t_prev = 0.0;
};

/// Smoothing factor of an exponential filter with cutoff `cutoff` Hz at sample period `period` s.
double one_euro_alpha(double cutoff, double period);

/// Throws NonMonotonicTime unless `t` is later than the previous sample.
double one_euro_step(OneEuroState& state, double x, double t, const OneEuroConfig& cfg);

struct KalmanConfig {
  double q_position = 1.0;         // px^2 per frame
  double q_velocity = 0.25;        // (px/frame)^2 per frame
  double measurement_noise = 4.0;  // px^2
  double init_position_var = 10.0;
  double init_velocity_var = 100.0;
};

using KalmanVector = Eigen::Matrix<double, 8, 1>;
using KalmanMatrix = Eigen::Matrix<double, 8, 8>;

/// (cx, cy, w, h, vcx, vcy, vw, vh) with covariance.
struct KalmanState {
  KalmanVector x = KalmanVector::Zero();
  KalmanMatrix p = KalmanMatrix::Identity();

  Box box() const;
};

KalmanState kalman_init(const Box& box, const KalmanConfig& cfg);
/// Constant-velocity step; returns the predicted box.
Box kalman_predict(KalmanState& state, const KalmanConfig& cfg);
/// Joseph-form correction with isotropic measurement noise `r_noise` (px^2).
/// An innovation covariance that is not positive-definite is re-symmetrized and
/// jittered once; SingularInnovation if that does not help.
void kalman_update(KalmanState& state, const Box& measured, double r_noise);

struct TrackerConfig {
  double score_high = 0.6;
  double score_low = 0.1;
  double iou_first = 0.3;
  double iou_second = 0.5;
  int max_age = 30;
  OneEuroConfig one_euro;
  KalmanConfig kalman;

  void validate() const;
};

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection), sorted by track
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> new_tracks;  // unmatched high-score detections
};

/// Two-stage association: high-score detections against every track, then the
/// remaining tracks against low-score detections. Each stage is a
/// maximum-total-IoU assignment restricted to pairs above that stage's threshold.
Association associate(std::span<const Box> track_boxes, std::span<const Detection2D> detections,
                      const TrackerConfig& cfg);

/// Most-voted class; ties go to the lowest class id.
int vote_winner(std::span<const double> votes);

struct Track {
  int id = 0;
  KalmanState kalman;
  std::vector<double> class_votes;
  int age = 0;
  int time_since_update = 0;
  std::array<OneEuroState, 2 * kKeypointCount> smoothers{};
  std::array<Keypoint2D, kKeypointCount> keypoints{};
  double score = 0.0;
};

/// Per-eye output for one track updated this frame.
struct TrackOutput {
  int track_id = 0;
  int class_id = 0;
  std::size_t detection = 0;  // index into this frame's detections
  Detection2D smoothed;
};

/// Single-camera tracking session.
class TrackerSession {
 public:
  TrackerSession(const TrackerConfig& cfg, int class_count);

  std::vector<TrackOutput> step(int frame, std::span<const Detection2D> detections);

  const std::vector<Track>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  TrackerConfig cfg_;
  int class_count_;
  int next_id_ = 0;
  int last_frame_ = -1;
  std::vector<Track> tracks_;
};

struct TrackedObject {
  int track_id = 0;  // left-eye track id
  int right_track_id = 0;
  int class_id = 0;
  std::size_t left_detection = 0;
  std::size_t right_detection = 0;
  StereoObservation observation;  // smoothed keypoints, visible where both eyes are
};

/// Independent left and right sessions whose per-frame outputs are paired along epipolar lines.
class StereoTracker {
 public:
  StereoTracker(const CameraRig& rig, const TrackerConfig& cfg, int class_count, const EpipolarConfig& epipolar = {});

  std::vector<TrackedObject> track_frame(int frame, std::span<const Detection2D> left,
                                         std::span<const Detection2D> right);

  const TrackerSession& left() const { return left_; }
  const TrackerSession& right() const { return right_; }

 private:
  CameraRig rig_;
  EpipolarConfig epipolar_;
  TrackerSession left_, right_;
};

struct FrameTracks {
  int frame = 0;
  std::vector<TrackedObject> objects;
  std::vector<int> detection_gt_ids;  // gt id of each of this frame's detections
};

/// Feeds each frame's detections (left and right views of the sequence records) through a StereoTracker.
std::vector<FrameTracks> track_sequence(const Sequence& sequence, const CameraRig& rig, const TrackerConfig& cfg,
                                        int class_count);

/// frame,track_id,class, then uL,vL,uR,vR for each keypoint (nan where not visible).
void write_tracks_csv(std::ostream& out, std::span<const FrameTracks> frames);

}  // namespace stereopose
