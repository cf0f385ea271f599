#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "stereopose/geometry.hpp"
#include "stereopose/instruments.hpp"
#include "stereopose/synth.hpp"

namespace stereopose {

struct FitConfig {
  int init_iters = 500;
  int track_iters = 100;
  double early_stop_px = 4.0;
  double lr = 0.01;
  /// Millimetres per optimizer unit of translation.
  double translation_unit = 100.0;
  int restarts = 8;
  /// Cosine learning-rate decay over each first-frame restart.
  bool init_lr_decay = true;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class FitMode { InitFrame, TrackFrame };

/// Minimum number of visible keypoints (over both eyes' shared slots) for a fit.
inline constexpr int kMinFitKeypoints = 4;

struct ReprojectionResult {
  /// Half the sum over both cameras of the mean per-keypoint pixel distance,
  /// plus the behind-camera barrier when active.
  double loss = 0.0;
  /// Mean per-keypoint pixel distance over both cameras (no barrier).
  double mean_px = 0.0;
  /// d loss / d (t, rotation6, articulation).
  std::array<double, Pose7D::kSize> gradient{};
};

ReprojectionResult reprojection_loss(const Pose7D& pose, const StereoObservation& obs, const InstrumentModel& model,
                                     const CameraRig& rig);

struct FitResult {
  Pose7D pose;          // best visited iterate, orthonormalized
  int iterations = 0;   // gradient steps taken (summed over restarts)
  double loss_px = 0.0; // mean per-keypoint reprojection error of `pose`
};

/// InitFrame: `restarts` seeded starts of `init_iters` steps, best kept.
/// TrackFrame: up to `track_iters` steps from `init`, stopping as soon as the
/// mean reprojection error drops below `early_stop_px`.
FitResult fit_pose(const std::optional<Pose7D>& init, const StereoObservation& obs, const InstrumentModel& model,
                   const CameraRig& rig, const FitConfig& config, FitMode mode);

struct FrameFit {
  int frame = 0;
  int track_id = 0;
  int class_id = 0;
  FitMode mode = FitMode::InitFrame;
  FitResult fit;
  double millis = 0.0;
};

/// First appearance of each ground-truth track is fitted in InitFrame mode,
/// later frames in TrackFrame mode from that track's previous result.
std::vector<FrameFit> fit_sequence(const Sequence& sequence, const std::vector<InstrumentModel>& models,
                                   const CameraRig& rig, const FitConfig& config);

/// frame,track_id,class,tx,ty,tz,r0..r5,articulation,loss_px,iters
void write_fit_csv(std::ostream& out, std::span<const FrameFit> fits);
/// frame,track_id,mode,millis
void write_fit_timing_csv(std::ostream& out, std::span<const FrameFit> fits);

}  // namespace stereopose
