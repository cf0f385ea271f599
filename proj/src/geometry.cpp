#include "stereopose/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "stereopose/assignment.hpp"
#include "stereopose/instruments.hpp"

namespace stereopose {

namespace {

constexpr double kDegenerateNorm = 1e-12;

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace

std::array<double, Pose7D::kSize> Pose7D::to_array() const {
  return {translation.x(), translation.y(), translation.z(), rotation6[0], rotation6[1],
          rotation6[2],    rotation6[3],    rotation6[4],    rotation6[5], articulation};
}

Pose7D Pose7D::from_array(std::span<const double> values) {
  if (values.size() != kSize) throw ShapeMismatch("pose needs 10 values");
  Pose7D p;
  p.translation = Vec3(values[0], values[1], values[2]);
  for (int i = 0; i < 6; ++i) p.rotation6[i] = values[3 + i];
  p.articulation = values[9];
  return p;
}

RotationMatrix RotationMatrix::checked(const Mat3& m, double tolerance) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (!(ortho <= tolerance) || !(std::abs(det - 1.0) <= tolerance))
    throw InvalidRotation("matrix is not a proper rotation");
  return RotationMatrix(m);
}

void CameraRig::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !(baseline > 0.0))
    throw InvalidArgument("camera rig needs positive focal lengths and baseline");
  if (image_width <= 0 || image_height <= 0) throw InvalidArgument("camera rig needs a positive image size");
  if (cx < 0.0 || cx >= image_width || cy < 0.0 || cy >= image_height)
    throw InvalidArgument("principal point outside the image");
}

Mat3 CameraRig::intrinsics() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

double Box::area() const { return std::max(0.0, width()) * std::max(0.0, height()); }

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

int StereoObservation::visible_count() const {
  return static_cast<int>(std::count_if(keypoints.begin(), keypoints.end(),
                                        [](const StereoKeypoint& k) { return k.visible; }));
}

Detection2D left_view(const StereoObservation& obs) {
  Detection2D d;
  d.class_id = obs.class_id;
  d.box = obs.box_left;
  d.score = obs.score;
  for (int k = 0; k < kKeypointCount; ++k)
    d.keypoints[k] = {obs.keypoints[k].u_left, obs.keypoints[k].v_left, obs.keypoints[k].visible};
  return d;
}

Detection2D right_view(const StereoObservation& obs) {
  Detection2D d;
  d.class_id = obs.class_id;
  d.box = obs.box_right;
  d.score = obs.score;
  for (int k = 0; k < kKeypointCount; ++k)
    d.keypoints[k] = {obs.keypoints[k].u_right, obs.keypoints[k].v_right, obs.keypoints[k].visible};
  return d;
}

// ---------------------------------------------------------------------------

RotationMatrix rot6d_to_matrix(const Rot6& r6) {
  const Vec3 a1 = r6.head<3>();
  const Vec3 a2 = r6.tail<3>();
  const double n1 = a1.norm();
  if (!(n1 >= kDegenerateNorm)) throw DegenerateRotation("first rotation column is zero");
  const Vec3 b1 = a1 / n1;
  const Vec3 u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (!(n2 >= kDegenerateNorm)) throw DegenerateRotation("rotation columns are parallel");
  const Vec3 b2 = u2 / n2;
  Mat3 r;
  r.col(0) = b1;
  r.col(1) = b2;
  r.col(2) = b1.cross(b2);
  return RotationMatrix(r);
}

Rot6 matrix_to_rot6d(const Mat3& r) {
  RotationMatrix::checked(r);
  Rot6 out;
  out.head<3>() = r.col(0);
  out.tail<3>() = r.col(1);
  return out;
}

RotationMatrix axis_angle_to_matrix(const Vec3& aa) {
  const double theta = aa.norm();
  if (theta < 1e-300) return RotationMatrix(Mat3::Identity());
  return RotationMatrix(axis_rotation(aa / theta, theta));
}

Mat3 axis_rotation(const Vec3& axis, double angle) {
  const Mat3 k = skew(axis);
  return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  const double cos_theta = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) return 0.5 * w;
  if (std::numbers::pi - theta > 1e-4) return theta / (2.0 * std::sin(theta)) * w;
  // Near a half turn the symmetric part of (R + I) / 2 approaches n n^T.
  const Mat3 s = ((r + r.transpose()) / 2.0 + Mat3::Identity()) / 2.0;
  int k = 0;
  s.diagonal().maxCoeff(&k);
  Vec3 n = s.col(k) / std::sqrt(std::max(s(k, k), 1e-300));
  n.normalize();
  if (n.dot(w) < 0.0) n = -n;
  return theta * n;
}

Mat3 rot6d_to_matrix_smooth(const Rot6& r6, double eps, GramSchmidtCache* cache) {
  GramSchmidtCache c;
  c.a1 = r6.head<3>();
  c.a2 = r6.tail<3>();
  c.n1 = std::sqrt(c.a1.squaredNorm() + eps * eps);
  c.b1 = c.a1 / c.n1;
  c.u2 = c.a2 - c.b1.dot(c.a2) * c.b1;
  c.n2 = std::sqrt(c.u2.squaredNorm() + eps * eps);
  c.b2 = c.u2 / c.n2;
  Mat3 r;
  r.col(0) = c.b1;
  r.col(1) = c.b2;
  r.col(2) = c.b1.cross(c.b2);
  if (cache) *cache = c;
  return r;
}

Rot6 rot6d_backward(const GramSchmidtCache& c, const Mat3& grad_r) {
  Vec3 g_b1 = grad_r.col(0);
  Vec3 g_b2 = grad_r.col(1);
  const Vec3 g_b3 = grad_r.col(2);
  // b3 = b1 x b2
  g_b1 += c.b2.cross(g_b3);
  g_b2 += g_b3.cross(c.b1);
  // b2 = u2 / n2
  const Vec3 g_u2 = g_b2 / c.n2 - c.u2 * (c.u2.dot(g_b2) / (c.n2 * c.n2 * c.n2));
  // u2 = a2 - (b1.a2) b1
  const double b1a2 = c.b1.dot(c.a2);
  const Vec3 g_a2 = g_u2 - c.b1 * c.b1.dot(g_u2);
  g_b1 -= b1a2 * g_u2 + c.b1.dot(g_u2) * c.a2;
  // b1 = a1 / n1
  const Vec3 g_a1 = g_b1 / c.n1 - c.a1 * (c.a1.dot(g_b1) / (c.n1 * c.n1 * c.n1));
  Rot6 out;
  out.head<3>() = g_a1;
  out.tail<3>() = g_a2;
  return out;
}

Vec3 axis_angle_backward(const Vec3& aa, const Mat3& grad_r) {
  // R = c0 I + c1 [a]x + c2 a a^T with c0 = cos t, c1 = sin t / t, c2 = (1 - cos t) / t^2.
  const double t2 = aa.squaredNorm();
  const double t = std::sqrt(t2);
  double c1, c2, dc1, dc2;  // dcX = (d cX / d t) / t, so d cX / d a_k = dcX * a_k
  if (t < 1e-4) {
    c1 = 1.0 - t2 / 6.0;
    c2 = 0.5 - t2 / 24.0;
    dc1 = -1.0 / 3.0 + t2 / 30.0;
    dc2 = -1.0 / 12.0 + t2 / 180.0;
  } else {
    const double s = std::sin(t), co = std::cos(t);
    c1 = s / t;
    c2 = (1.0 - co) / t2;
    dc1 = (co - c1) / t2;
    dc2 = (c1 - 2.0 * c2) / t2;
  }
  const double dc0 = -c1;  // d cos t / d a_k = -sin t * a_k / t
  const Mat3 a_skew = skew(aa);
  const Mat3 aat = aa * aa.transpose();
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    const Vec3 e = Vec3::Unit(k);
    const Mat3 dr = dc0 * aa[k] * Mat3::Identity() + dc1 * aa[k] * a_skew + c1 * skew(e) +
                    dc2 * aa[k] * aat + c2 * (e * aa.transpose() + aa * e.transpose());
    out[k] = (grad_r.array() * dr.array()).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Vec3> apply_pose(const Pose7D& pose, const InstrumentModel& model, PointSet points) {
  return apply_pose(rot6d_to_matrix(pose.rotation6).matrix(), pose.translation, pose.articulation,
                    model, points);
}

std::vector<Vec3> apply_pose(const Mat3& rotation, const Vec3& translation, double articulation,
                             const InstrumentModel& model, PointSet points) {
  const Mat3 hinge = axis_rotation(model.hinge_axis, articulation);
  auto place = [&](Part part, const Vec3& p) -> Vec3 {
    const Vec3 local = part == Part::B ? Vec3(model.hinge_point + hinge * (p - model.hinge_point)) : p;
    return rotation * local + translation;
  };
  std::vector<Vec3> out;
  if (points == PointSet::Keypoints) {
    out.reserve(kKeypointCount);
    for (const auto& kp : model.keypoints) out.push_back(place(kp.part, kp.position));
  } else {
    out.reserve(model.surface_size());
    for (const auto& p : model.part_a) out.push_back(place(Part::A, p));
    for (const auto& p : model.part_b) out.push_back(place(Part::B, p));
  }
  return out;
}

void apply_pose_backward(const Mat3& rotation, double articulation, const InstrumentModel& model,
                         PointSet points, std::span<const Vec3> point_grads, PoseGradient& out) {
  const Mat3 hinge = axis_rotation(model.hinge_axis, articulation);
  auto accumulate = [&](Part part, const Vec3& p, const Vec3& g) {
    out.translation += g;
    if (part == Part::A) {
      out.rotation += g * p.transpose();
      return;
    }
    const Vec3 arm = hinge * (p - model.hinge_point);
    const Vec3 local = model.hinge_point + arm;
    out.rotation += g * local.transpose();
    out.articulation += (rotation.transpose() * g).dot(model.hinge_axis.cross(arm));
  };
  if (points == PointSet::Keypoints) {
    if (point_grads.size() != static_cast<std::size_t>(kKeypointCount))
      throw ShapeMismatch("keypoint gradient count");
    for (int k = 0; k < kKeypointCount; ++k)
      accumulate(model.keypoints[k].part, model.keypoints[k].position, point_grads[k]);
  } else {
    if (point_grads.size() != model.surface_size()) throw ShapeMismatch("surface gradient count");
    for (std::size_t i = 0; i < model.surface_size(); ++i)
      accumulate(model.surface_part(i), model.surface_point(i), point_grads[i]);
  }
}

// ---------------------------------------------------------------------------

Vec3 to_camera_frame(const CameraRig& rig, Eye eye, const Vec3& world) {
  return eye == Eye::Left ? world : Vec3(world.x() - rig.baseline, world.y(), world.z());
}

Vec2 project_point(const CameraRig& rig, Eye eye, const Vec3& point) {
  const Vec3 c = to_camera_frame(rig, eye, point);
  if (!(c.z() > kMinDepth)) throw BehindCamera(0);
  return {rig.fx * c.x() / c.z() + rig.cx, rig.fy * c.y() / c.z() + rig.cy};
}

std::vector<Vec2> project(const CameraRig& rig, Eye eye, std::span<const Vec3> points) {
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 c = to_camera_frame(rig, eye, points[i]);
    if (!(c.z() > kMinDepth)) throw BehindCamera(i);
    out.emplace_back(rig.fx * c.x() / c.z() + rig.cx, rig.fy * c.y() / c.z() + rig.cy);
  }
  return out;
}

Vec3 triangulate(const CameraRig& rig, const Vec2& left, const Vec2& right) {
  const double d = left.x() - right.x();
  if (!(d > kMinDisparity)) throw ZeroDisparity("disparity below threshold");
  const double z = rig.fx * rig.baseline / d;
  const double x = (left.x() - rig.cx) * z / rig.fx;
  const double y = ((left.y() + right.y()) / 2.0 - rig.cy) * z / rig.fy;
  return {x, y, z};
}

double epipolar_cost(const Detection2D& left, const Detection2D& right, const EpipolarConfig& cfg) {
  double sum = 0.0;
  int shared = 0;
  for (int k = 0; k < kKeypointCount; ++k) {
    if (!left.keypoints[k].visible || !right.keypoints[k].visible) continue;
    sum += std::abs(left.keypoints[k].v - right.keypoints[k].v);
    ++shared;
  }
  const double row = shared > 0 ? sum / shared : std::abs(left.box.center().y() - right.box.center().y());
  return row + (left.class_id != right.class_id ? cfg.class_penalty : 0.0);
}

std::vector<std::pair<std::size_t, std::size_t>> epipolar_match(std::span<const Detection2D> left,
                                                                std::span<const Detection2D> right,
                                                                [[maybe_unused]] const CameraRig& rig,
                                                                const EpipolarConfig& cfg) {
  // Admissible pairs get weight big - cost, so the count of pairs dominates and
  // total cost breaks ties between equally sized matchings.
  const double big = 4.0 * cfg.max_cost * static_cast<double>(std::max(left.size(), right.size()) + 1);
  std::vector<double> w(left.size() * right.size(), 0.0);
  for (std::size_t i = 0; i < left.size(); ++i)
    for (std::size_t j = 0; j < right.size(); ++j) {
      const double c = epipolar_cost(left[i], right[j], cfg);
      if (c <= cfg.max_cost) w[i * right.size() + j] = big - c;
    }
  return max_weight_matching(w, left.size(), right.size());
}

}  // namespace stereopose
