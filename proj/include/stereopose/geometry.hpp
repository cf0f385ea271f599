#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "stereopose/errors.hpp"

namespace stereopose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rot6 = Eigen::Matrix<double, 6, 1>;

inline constexpr int kKeypointCount = 12;
inline constexpr double kMaxArticulation = std::numbers::pi / 2.0;
/// Near plane of both cameras, mm.
inline constexpr double kMinDepth = 10.0;
/// Smallest disparity accepted by triangulation, px.
inline constexpr double kMinDisparity = 0.1;

/// Translation (mm), continuous 6-value rotation (columns a1, a2) and hinge angle (rad).
struct Pose7D {
  Vec3 translation = Vec3::Zero();
  Rot6 rotation6 = (Rot6() << 1, 0, 0, 0, 1, 0).finished();
  double articulation = 0.0;

  static constexpr std::size_t kSize = 10;

  /// Flattened as t(3), rotation6(6), articulation(1).
  std::array<double, kSize> to_array() const;
  static Pose7D from_array(std::span<const double> values);
};

/// Orthonormal 3x3 matrix with unit determinant.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}

  /// Throws InvalidRotation when |RᵀR - I| or |det R - 1| exceeds `tolerance`.
  static RotationMatrix checked(const Mat3& m, double tolerance = 1e-6);

  const Mat3& matrix() const noexcept { return m_; }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

 private:
  explicit RotationMatrix(const Mat3& m) : m_(m) {}
  Mat3 m_;

  friend RotationMatrix rot6d_to_matrix(const Rot6& r6);
  friend RotationMatrix axis_angle_to_matrix(const Vec3& aa);
};

/// Rectified stereo pinhole pair. The right camera sits at +baseline along x.
struct CameraRig {
  double fx = 1100.0;
  double fy = 1100.0;
  double cx = 576.0;
  double cy = 576.0;
  int image_width = 1152;
  int image_height = 1152;
  double baseline = 64.0;

  void validate() const;
  Mat3 intrinsics() const;
};

enum class Eye { Left, Right };

struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const;
  Vec2 center() const { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }
  static Box from_center(double cx, double cy, double w, double h) {
    return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
  }
};

double iou(const Box& a, const Box& b);

struct StereoKeypoint {
  double u_left = 0.0, v_left = 0.0, u_right = 0.0, v_right = 0.0;
  bool visible = false;
};

/// One matched object seen by both cameras.
struct StereoObservation {
  int class_id = 0;
  std::array<StereoKeypoint, kKeypointCount> keypoints{};
  Box box_left, box_right;
  double score = 1.0;

  int visible_count() const;
};

struct Keypoint2D {
  double u = 0.0, v = 0.0;
  bool visible = false;
};

/// A single-eye detection as produced by the upstream detector.
struct Detection2D {
  int class_id = 0;
  Box box;
  double score = 1.0;
  std::array<Keypoint2D, kKeypointCount> keypoints{};
};

Detection2D left_view(const StereoObservation& obs);
Detection2D right_view(const StereoObservation& obs);

// ---------------------------------------------------------------------------
// Rotations

/// Gram-Schmidt on (a1, a2). Throws DegenerateRotation on a zero or parallel pair.
RotationMatrix rot6d_to_matrix(const Rot6& r6);

/// First two columns of `r`. Throws InvalidRotation if `r` is not a rotation within 1e-6.
Rot6 matrix_to_rot6d(const Mat3& r);
inline Rot6 matrix_to_rot6d(const RotationMatrix& r) { return matrix_to_rot6d(r.matrix()); }

/// Rodrigues formula; the zero vector maps to identity.
RotationMatrix axis_angle_to_matrix(const Vec3& aa);

/// Inverse of axis_angle_to_matrix with angle in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& r);

/// Rotation by `angle` about the unit vector `axis`.
Mat3 axis_rotation(const Vec3& axis, double angle);

/// Intermediate values of a regularized Gram-Schmidt pass, kept for the backward pass.
struct GramSchmidtCache {
  Vec3 a1, a2, u2, b1, b2;
  double n1 = 1.0, n2 = 1.0;
};

/// Gram-Schmidt with norms sqrt(|v|^2 + eps^2). Never throws; used on raw
/// network or optimizer outputs where an exact zero is possible.
Mat3 rot6d_to_matrix_smooth(const Rot6& r6, double eps, GramSchmidtCache* cache = nullptr);

/// dL/d(r6) given dL/dR for the pass recorded in `cache`.
Rot6 rot6d_backward(const GramSchmidtCache& cache, const Mat3& grad_r);

/// dL/d(aa) given dL/dR where R = axis_angle_to_matrix(aa).
Vec3 axis_angle_backward(const Vec3& aa, const Mat3& grad_r);

// ---------------------------------------------------------------------------
// Articulated world transform

struct InstrumentModel;

enum class PointSet { Keypoints, Surface };

/// Part A points receive (R, t); part B points are first rotated by the
/// articulation angle about the model's hinge axis through its hinge point.
std::vector<Vec3> apply_pose(const Pose7D& pose, const InstrumentModel& model, PointSet points);
std::vector<Vec3> apply_pose(const Mat3& rotation, const Vec3& translation, double articulation,
                             const InstrumentModel& model, PointSet points);

/// Gradient of a scalar with respect to (t, R, articulation).
struct PoseGradient {
  Vec3 translation = Vec3::Zero();
  Mat3 rotation = Mat3::Zero();
  double articulation = 0.0;
};

/// Accumulates into `out` the pose gradient implied by per-point gradients
/// `point_grads` (same order as apply_pose output).
void apply_pose_backward(const Mat3& rotation, double articulation, const InstrumentModel& model,
                         PointSet points, std::span<const Vec3> point_grads, PoseGradient& out);

// ---------------------------------------------------------------------------
// Stereo camera

/// Point in the chosen camera's frame (the right frame is shifted by -baseline in x).
Vec3 to_camera_frame(const CameraRig& rig, Eye eye, const Vec3& world);

/// Pinhole projection. Throws BehindCamera(i) for the first point with z <= kMinDepth.
std::vector<Vec2> project(const CameraRig& rig, Eye eye, std::span<const Vec3> points);
Vec2 project_point(const CameraRig& rig, Eye eye, const Vec3& point);

/// Closed-form rectified triangulation; the two rows are averaged.
Vec3 triangulate(const CameraRig& rig, const Vec2& left, const Vec2& right);

struct EpipolarConfig {
  double class_penalty = 1e3;  // px
  double max_cost = 20.0;      // px
};

/// Mean |v_left - v_right| over keypoints visible in both, plus the class penalty.
/// Falls back to the box-centre row difference when no keypoint is shared.
double epipolar_cost(const Detection2D& left, const Detection2D& right, const EpipolarConfig& cfg);

/// Left/right pairing that maximizes the number of admissible pairs
/// (cost <= max_cost) and, among those, minimizes total cost.
std::vector<std::pair<std::size_t, std::size_t>> epipolar_match(
    std::span<const Detection2D> left, std::span<const Detection2D> right, const CameraRig& rig,
    const EpipolarConfig& cfg = {});

}  // namespace stereopose
