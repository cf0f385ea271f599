#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "stereopose/geometry.hpp"
#include "stereopose/instruments.hpp"
#include "stereopose/rng.hpp"

namespace stereopose {

/// Random 7D pose ranges. Rotations are Haar-uniform.
struct PoseSampler {
  Vec3 min_translation{-200.0, -200.0, 400.0};
  Vec3 max_translation{200.0, 200.0, 1500.0};
  double max_articulation = kMaxArticulation;
  std::uint64_t seed = 0;
  int max_attempts = 100;
};

/// Mock-detector corruption applied to clean observations.
struct NoiseConfig {
  double keypoint_sigma = 2.0;  // px
  double dropout_prob = 0.05;
  double misclass_prob = 0.02;
  double score_min = 0.1;
  double score_max = 1.0;

  void validate() const;
};

struct DatasetRecord {
  int class_id = 0;
  Pose7D pose;
  StereoObservation observation;
  std::array<Vec3, kKeypointCount> keypoints3d{};
};

/// True when every point projects inside both images and in front of both cameras.
bool all_in_view(const CameraRig& rig, std::span<const Vec3> points);

/// Draws poses until all 12 posed keypoints are visible in both images.
/// Throws FrustumExhausted after `sampler.max_attempts` rejections.
Pose7D sample_pose(const PoseSampler& sampler, const InstrumentModel& model, const CameraRig& rig, Rng& rng);
/// Same, with a fresh stream seeded from `sampler.seed`.
Pose7D sample_pose(const PoseSampler& sampler, const InstrumentModel& model, const CameraRig& rig);

/// Exact projection of posed keypoints. Keypoints outside the image (10% margin)
/// or behind a camera are marked invisible. Boxes enclose the in-view keypoints.
StereoObservation observe(const CameraRig& rig, int class_id, std::span<const Vec3> keypoints3d);

/// Gaussian pixel noise on visible keypoints and boxes, keypoint dropout,
/// relabeling to a uniformly drawn other class, and a score scaled by the
/// surviving keypoint share (clamped to the score range).
StereoObservation perturb_observation(const StereoObservation& obs, const NoiseConfig& noise, int class_count,
                                      Rng& rng);

/// Record `index` of a dataset; depends only on (sampler.seed, index) and the inputs.
DatasetRecord make_record(const std::vector<InstrumentModel>& models, const CameraRig& rig,
                          const PoseSampler& sampler, std::uint64_t index, const std::optional<NoiseConfig>& noise);

/// `n` records generated in parallel over per-record RNG streams.
std::vector<DatasetRecord> generate_records(const std::vector<InstrumentModel>& models, const CameraRig& rig,
                                            const PoseSampler& sampler, std::size_t n,
                                            const std::optional<NoiseConfig>& noise);

// ---------------------------------------------------------------------------
// Sequences

enum class MotionKind { Smooth, Static, Crossing };

struct MotionConfig {
  MotionKind kind = MotionKind::Smooth;
  int knot_spacing = 20;           // frames between spline control poses
  double knot_translation = 40.0;  // mm, std of the knot-to-knot step
  double knot_rotation = 0.25;     // rad, std of the knot-to-knot rotation
  double crossing_depth = 700.0;   // mm
  double crossing_span = 120.0;    // mm, objects travel from -span to +span in x
};

/// Frames [first_frame, last_frame] of `object` get a forced low score.
struct OcclusionWindow {
  int object = 0;
  int first_frame = 0;
  int last_frame = 0;
  double score = 0.2;
  double dropout = 0.0;
};

struct SequenceConfig {
  int n_frames = 50;
  int n_objects = 1;
  MotionConfig motion;
  std::optional<NoiseConfig> noise;
  std::vector<OcclusionWindow> occlusions;
  std::vector<int> class_ids;  // one per object; drawn (distinct) when empty
  std::uint64_t seed = 0;
  double frame_rate = 30.0;
};

struct SequenceDetection {
  int frame = 0;
  int track_gt_id = 0;
  DatasetRecord record;
};

struct Sequence {
  SequenceConfig config;
  std::vector<std::vector<SequenceDetection>> frames;
};

Sequence generate_sequence(const std::vector<InstrumentModel>& models, const CameraRig& rig,
                           const SequenceConfig& config);

}  // namespace stereopose
