#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "stereopose/geometry.hpp"
#include "stereopose/instruments.hpp"
#include "stereopose/rng.hpp"

namespace stereopose {
namespace {

constexpr double kPi = std::numbers::pi;

Rot6 r6(double a, double b, double c, double d, double e, double f) { return (Rot6() << a, b, c, d, e, f).finished(); }

double orthonormality_error(const Mat3& r) {
  return std::max((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), std::abs(r.determinant() - 1.0));
}

TEST(Rot6d, CanonicalBasisIsIdentity) {
  EXPECT_TRUE(rot6d_to_matrix(r6(1, 0, 0, 0, 1, 0)).matrix().isApprox(Mat3::Identity(), 1e-15));
  EXPECT_TRUE(rot6d_to_matrix(r6(2, 0, 0, 0, 3, 0)).matrix().isApprox(Mat3::Identity(), 1e-15));
}

TEST(Rot6d, QuarterTurnAboutZ) {
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 r = rot6d_to_matrix(r6(0, 1, 0, -1, 0, 0)).matrix();
  EXPECT_LT((r - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((matrix_to_rot6d(expected) - r6(0, 1, 0, -1, 0, 0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((axis_angle_to_matrix(Vec3(0, 0, kPi / 2)).matrix() - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Rot6d, HalfTurnAboutX) {
  const Mat3 r = axis_angle_to_matrix(Vec3(kPi, 0, 0)).matrix();
  EXPECT_LT((r - Vec3(1, -1, -1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_TRUE(axis_angle_to_matrix(Vec3::Zero()).matrix().isIdentity(0.0));
}

TEST(Rot6d, DegenerateInputsThrow) {
  EXPECT_THROW(rot6d_to_matrix(r6(0, 0, 0, 0, 1, 0)), DegenerateRotation);
  EXPECT_THROW(rot6d_to_matrix(r6(1, 0, 0, 2, 0, 0)), DegenerateRotation);
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 1.1;
  EXPECT_THROW(matrix_to_rot6d(bad), InvalidRotation);
}

TEST(Rot6d, RandomInputsAreOrthonormalAndRoundTrip) {
  Rng rng(11);
  double worst_ortho = 0.0, worst_trip = 0.0, worst_scale = 0.0, worst_aa = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Rot6 v;
    for (int k = 0; k < 6; ++k) v[k] = rng.normal();
    const Mat3 r = rot6d_to_matrix(v).matrix();
    worst_ortho = std::max(worst_ortho, orthonormality_error(r));
    worst_trip = std::max(worst_trip, (rot6d_to_matrix(matrix_to_rot6d(r)).matrix() - r).cwiseAbs().maxCoeff());

    Rot6 scaled = v;
    scaled.head<3>() *= rng.uniform(0.1, 10.0);
    scaled.tail<3>() *= rng.uniform(0.1, 10.0);
    worst_scale = std::max(worst_scale, (rot6d_to_matrix(scaled).matrix() - r).cwiseAbs().maxCoeff());

    const Vec3 aa = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized() * rng.uniform(0.0, kPi * 0.999);
    const Mat3 ra = axis_angle_to_matrix(aa).matrix();
    worst_aa = std::max(worst_aa, (rot6d_to_matrix(matrix_to_rot6d(ra)).matrix() - ra).cwiseAbs().maxCoeff());
    worst_aa = std::max(worst_aa, (axis_angle_to_matrix(matrix_to_axis_angle(ra)).matrix() - ra).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst_ortho, 1e-9);
  EXPECT_LT(worst_trip, 1e-9);
  EXPECT_LT(worst_scale, 1e-12);
  EXPECT_LT(worst_aa, 1e-9);
}

TEST(Rot6d, SmoothFormMatchesExactAwayFromDegeneracy) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Rot6 v = matrix_to_rot6d(random_rotation(rng));
    EXPECT_LT((rot6d_to_matrix_smooth(v, 1e-8) - rot6d_to_matrix(v).matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_TRUE(rot6d_to_matrix_smooth(Rot6::Zero(), 1e-8).allFinite());
}

TEST(Rot6d, BackwardMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Rot6 v;
    for (int k = 0; k < 6; ++k) v[k] = rng.normal();
    Mat3 weights;
    for (int k = 0; k < 9; ++k) weights.data()[k] = rng.normal();
    auto f = [&](const Rot6& x) { return (rot6d_to_matrix_smooth(x, 1e-8).array() * weights.array()).sum(); };
    GramSchmidtCache cache;
    rot6d_to_matrix_smooth(v, 1e-8, &cache);
    const Rot6 g = rot6d_backward(cache, weights);
    for (int k = 0; k < 6; ++k) {
      Rot6 hi = v, lo = v;
      hi[k] += 1e-6;
      lo[k] -= 1e-6;
      const double numeric = (f(hi) - f(lo)) / 2e-6;
      EXPECT_LT(test::relative_error(g[k], numeric), 1e-6) << "component " << k;
    }
  }
}

TEST(AxisAngle, BackwardMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 aa(rng.normal(), rng.normal(), rng.normal());
    Mat3 weights;
    for (int k = 0; k < 9; ++k) weights.data()[k] = rng.normal();
    auto f = [&](const Vec3& x) { return (axis_angle_to_matrix(x).matrix().array() * weights.array()).sum(); };
    const Vec3 g = axis_angle_backward(aa, weights);
    for (int k = 0; k < 3; ++k) {
      Vec3 hi = aa, lo = aa;
      hi[k] += 1e-6;
      lo[k] -= 1e-6;
      EXPECT_LT(test::relative_error(g[k], (f(hi) - f(lo)) / 2e-6), 1e-6);
    }
  }
}

class ApplyPose : public ::testing::Test {
 protected:
  std::vector<InstrumentModel> models = make_instrument_set(7, 4);
};

TEST_F(ApplyPose, IdentityLeavesCanonicalPoints) {
  const auto& m = models[0];
  const auto pts = apply_pose(Pose7D{}, m, PointSet::Surface);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(pts[i], m.surface_point(i));
}

TEST_F(ApplyPose, TranslationShiftsEveryPoint) {
  const auto& m = models[1];
  Pose7D p;
  p.translation = Vec3(10, 0, 0);
  const auto pts = apply_pose(p, m, PointSet::Surface);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((pts[i] - m.surface_point(i) - Vec3(10, 0, 0)).norm(), 1e-12);
}

TEST_F(ApplyPose, HingePointsAreFixedByArticulation) {
  InstrumentModel m = models[2];
  m.part_b = {m.hinge_point, m.hinge_point + 25.0 * m.hinge_axis, m.hinge_point - 7.0 * m.hinge_axis};
  Pose7D open, closed;
  open.articulation = 0.3;
  const auto a = apply_pose(open, m, PointSet::Surface);
  const auto b = apply_pose(closed, m, PointSet::Surface);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT((a[i] - b[i]).norm(), 1e-12);
}

TEST_F(ApplyPose, EachPartStaysRigid) {
  Rng rng(21);
  double worst = 0.0;
  for (const auto& m : models) {
    const auto canon = apply_pose(Pose7D{}, m, PointSet::Surface);
    for (int trial = 0; trial < 20; ++trial) {
      Pose7D p;
      p.translation = Vec3(rng.normal(0, 200), rng.normal(0, 200), rng.normal(800, 200));
      p.rotation6 = matrix_to_rot6d(random_rotation(rng));
      p.articulation = rng.uniform(0.0, kMaxArticulation);
      const auto posed = apply_pose(p, m, PointSet::Surface);
      for (std::size_t i = 0; i < posed.size(); i += 7)
        for (std::size_t j = i + 1; j < posed.size(); j += 5) {
          if (m.surface_part(i) != m.surface_part(j)) continue;
          worst = std::max(worst, std::abs((posed[i] - posed[j]).norm() - (canon[i] - canon[j]).norm()));
        }
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST_F(ApplyPose, BackwardMatchesFiniteDifferences) {
  Rng rng(4);
  const auto& m = models[3];
  for (int trial = 0; trial < 10; ++trial) {
    const Mat3 r = random_rotation(rng);
    const Vec3 t(rng.normal(), rng.normal(), 700.0);
    const double theta = rng.uniform(0.1, 1.4);
    std::vector<Vec3> w(kKeypointCount);
    for (auto& v : w) v = Vec3(rng.normal(), rng.normal(), rng.normal());
    auto f = [&](const Mat3& rr, const Vec3& tt, double th) {
      const auto pts = apply_pose(rr, tt, th, m, PointSet::Keypoints);
      double s = 0.0;
      for (std::size_t i = 0; i < pts.size(); ++i) s += w[i].dot(pts[i]);
      return s;
    };
    PoseGradient g;
    apply_pose_backward(r, theta, m, PointSet::Keypoints, w, g);
    // The sum is linear in rotation and translation, so a wide step carries no truncation error there.
    const double h = 1e-3;
    for (int k = 0; k < 3; ++k) {
      Vec3 hi = t, lo = t;
      hi[k] += h;
      lo[k] -= h;
      EXPECT_LT(test::relative_error(g.translation[k], (f(r, hi, theta) - f(r, lo, theta)) / (2 * h)), 1e-6);
    }
    for (int k = 0; k < 9; ++k) {
      Mat3 hi = r, lo = r;
      hi.data()[k] += h;
      lo.data()[k] -= h;
      EXPECT_LT(test::relative_error(g.rotation.data()[k], (f(hi, t, theta) - f(lo, t, theta)) / (2 * h)), 1e-6);
    }
    const double ht = 1e-6;
    EXPECT_LT(test::relative_error(g.articulation, (f(r, t, theta + ht) - f(r, t, theta - ht)) / (2 * ht)), 1e-6);
  }
}

TEST(Camera, ProjectionArithmetic) {
  CameraRig rig;
  EXPECT_LT((project_point(rig, Eye::Left, Vec3(0, 0, 500)) - Vec2(rig.cx, rig.cy)).norm(), 1e-12);
  rig.fx = rig.fy = 1000.0;
  EXPECT_LT((project_point(rig, Eye::Left, Vec3(50, 0, 1000)) - Vec2(rig.cx + 50, rig.cy)).norm(), 1e-12);
  EXPECT_THROW(project_point(rig, Eye::Left, Vec3(0, 0, -100)), BehindCamera);
  const std::vector<Vec3> pts = {{0, 0, 500}, {0, 0, -1}};
  try {
    project(rig, Eye::Right, pts);
    FAIL() << "expected BehindCamera";
  } catch (const BehindCamera& e) {
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(Camera, TriangulationFromDisparity) {
  CameraRig rig;
  rig.fx = rig.fy = 1000.0;
  rig.baseline = 64.0;
  const Vec3 p = triangulate(rig, Vec2(rig.cx + 5, rig.cy), Vec2(rig.cx - 5, rig.cy));
  EXPECT_NEAR(p.z(), 6400.0, 1e-9);
  EXPECT_THROW(triangulate(rig, Vec2(100, 100), Vec2(100, 100)), ZeroDisparity);
}

TEST(Camera, ProjectTriangulateRoundTrip) {
  const CameraRig rig;
  Rng rng(9);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double z = rng.uniform(300, 2000);
    const Vec3 p(rng.uniform(-0.4, 0.4) * z, rng.uniform(-0.4, 0.4) * z, z);
    const Vec3 q = triangulate(rig, project_point(rig, Eye::Left, p), project_point(rig, Eye::Right, p));
    worst = std::max(worst, (p - q).norm());
  }
  EXPECT_LT(worst, 1e-6);
}

Detection2D detection(int cls, double v_row, Rng& rng) {
  Detection2D d;
  d.class_id = cls;
  d.box = Box::from_center(500, v_row, 80, 60);
  for (auto& k : d.keypoints) k = {rng.uniform(400, 600), v_row + rng.uniform(-20, 20), true};
  return d;
}

TEST(Epipolar, SimpleCases) {
  const CameraRig rig;
  Rng rng(1);
  Detection2D l = detection(3, 300, rng), r = l;
  for (auto& k : r.keypoints) k.v += 0.5;
  const std::vector<Detection2D> left{l}, right{r};
  EXPECT_EQ(epipolar_match(left, right, rig).size(), 1u);
  std::vector<Detection2D> other{r};
  other[0].class_id = 4;
  EXPECT_TRUE(epipolar_match(left, other, rig).empty());
}

TEST(Epipolar, SeparatedRowsDoNotSwap) {
  const CameraRig rig;
  Rng rng(2);
  const Detection2D a = detection(1, 300, rng), b = detection(1, 500, rng);
  const std::vector<Detection2D> left{a, b}, right{b, a};
  const auto m = epipolar_match(left, right, rig);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], std::make_pair(std::size_t{0}, std::size_t{1}));
  EXPECT_EQ(m[1], std::make_pair(std::size_t{1}, std::size_t{0}));
}

TEST(Epipolar, MatchesBruteForceOnSmallInstances) {
  const CameraRig rig;
  const EpipolarConfig cfg;
  Rng rng(31);
  int disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int nl = rng.uniform_int(5), nr = rng.uniform_int(5);
    std::vector<Detection2D> left, right;
    for (int i = 0; i < nl; ++i) left.push_back(detection(rng.uniform_int(3), rng.uniform(100, 1000), rng));
    for (int j = 0; j < nr; ++j) {
      Detection2D d = j < nl && rng.bernoulli(0.7) ? left[j] : detection(rng.uniform_int(3), rng.uniform(100, 1000), rng);
      for (auto& k : d.keypoints) {
        k.v += rng.normal(0, 3);
        k.visible = rng.bernoulli(0.9);
      }
      right.push_back(d);
    }
    std::vector<double> cost(left.size() * right.size());
    for (std::size_t i = 0; i < left.size(); ++i)
      for (std::size_t j = 0; j < right.size(); ++j)
        cost[i * right.size() + j] = test::epipolar_cost_oracle(left[i], right[j], cfg.class_penalty);
    const auto best = test::brute_force_assignment(cost, left.size(), right.size(), cfg.max_cost);
    const auto got = epipolar_match(left, right, rig, cfg);
    if (got != best.pairs) ++disagreements;
  }
  EXPECT_EQ(disagreements, 0);
}

}  // namespace
}  // namespace stereopose
