#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stereopose/geometry.hpp"
#include "stereopose/instruments.hpp"
#include "stereopose/kernels.hpp"
#include "stereopose/synth.hpp"

namespace stereopose {

enum class Modality { Mono, Stereo };
enum class RotationMode { AxisAngle3, SixD };

/// 12 keypoint tokens followed by one pose query token.
inline constexpr int kTokensPerObject = kKeypointCount + 1;

struct ModelConfig {
  int layers = 5;
  int hidden_dim = 128;
  int heads = 4;
  int ffn_multiplier = 4;
  Modality modality = Modality::Stereo;
  bool keypoint_onehot = true;
  RotationMode rotation_mode = RotationMode::SixD;
  int class_count = 13;
  double w_pose = 1.0;
  double w_vertex = 1.0;
  double w_kp3d = 1.0;

  void validate() const;
  /// Token layout: uL/W vL/H uR/W vR/H vis [onehot(12)] onehot(C) pose_flag.
  int feature_dim() const { return 5 + (keypoint_onehot ? kKeypointCount : 0) + class_count + 1; }
  int rotation_dim() const { return rotation_mode == RotationMode::SixD ? 6 : 3; }
  /// Raw pose head width: translation, rotation, articulation.
  int pose_dim() const { return 3 + rotation_dim() + 1; }
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0, cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// All weights in one flat buffer; `tensors` names the slices in checkpoint order.
struct TransformerParams {
  ModelConfig config;
  std::vector<TensorInfo> tensors;
  std::vector<double> values;

  const TensorInfo& tensor(std::string_view name) const;
  kernels::MatrixRef view(std::size_t index) {
    const auto& t = tensors[index];
    return {values.data() + t.offset, t.rows, t.cols};
  }
  kernels::ConstMatrixRef view(std::size_t index) const {
    const auto& t = tensors[index];
    return {values.data() + t.offset, t.rows, t.cols};
  }
};

/// Zero weights with unit layer-norm scales.
TransformerParams make_params(const ModelConfig& config);
/// Xavier-uniform weights, zero biases, unit layer-norm scales.
TransformerParams init_params(const ModelConfig& config, std::uint64_t seed);
bool all_finite(const TransformerParams& params);

/// 13 x feature_dim token matrix for one observation.
kernels::Matrix tokenize(const StereoObservation& obs, const ModelConfig& config, const CameraRig& rig);
void tokenize_into(const StereoObservation& obs, const ModelConfig& config, const CameraRig& rig, double* rows);

/// Un-decoded network outputs for one object.
struct RawOutput {
  std::array<Vec3, kKeypointCount> keypoints;  // raw keypoint head
  std::vector<double> pose;                    // raw pose head, pose_dim() values
};

/// Network forward for tokens stacked 13 rows per object.
std::vector<RawOutput> forward(const TransformerParams& params, kernels::ConstMatrixRef tokens);
RawOutput forward(const TransformerParams& params, const kernels::Matrix& tokens);

/// Decoded outputs in physical units.
struct Prediction {
  std::array<Vec3, kKeypointCount> keypoints3d;  // mm
  Vec3 translation;
  Mat3 rotation;
  double articulation = 0.0;
  /// Proper pose: orthonormal rotation, articulation clamped to [0, max].
  Pose7D pose() const;
};

Prediction decode(const ModelConfig& config, const RawOutput& raw);
/// Raw outputs that decode exactly to `pose` and `keypoints3d`.
RawOutput encode(const ModelConfig& config, const Pose7D& pose, std::span<const Vec3> keypoints3d);

std::vector<Prediction> predict(const TransformerParams& params, std::span<const StereoObservation> observations,
                                const CameraRig& rig);

struct LossTerms {
  double total = 0.0;
  double pose = 0.0;
  double vertex = 0.0;
  double kp3d = 0.0;

  LossTerms& operator+=(const LossTerms& o) {
    total += o.total;
    pose += o.pose;
    vertex += o.vertex;
    kp3d += o.kp3d;
    return *this;
  }
};

/// Composite loss of one object's raw outputs against its ground truth:
///   w_pose * |P_hat - P| + w_vertex * mean_i |V_hat_i - V_i| + w_kp3d * mean_k |K_hat_k - K_k|
/// with P the flattened (t, rotation, articulation) vector. `grad`, when given,
/// receives dLoss/d(raw outputs).
LossTerms output_loss(const ModelConfig& config, const RawOutput& raw, const DatasetRecord& record,
                      const InstrumentModel& model, RawOutput* grad = nullptr);

/// Summed loss over `records`; when `gradient` is non-empty it receives the
/// summed parameter gradient (added to its current contents).
LossTerms batch_loss(const TransformerParams& params, std::span<const DatasetRecord* const> records,
                     const std::vector<InstrumentModel>& models, const CameraRig& rig, std::span<double> gradient);

struct LossResult {
  LossTerms terms;
  std::vector<double> gradient;
};

LossResult loss(const TransformerParams& params, const DatasetRecord& record, const InstrumentModel& model,
                const CameraRig& rig);

}  // namespace stereopose
