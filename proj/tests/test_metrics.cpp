#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "stereopose/metrics.hpp"
#include "stereopose/synth.hpp"

namespace stereopose {
namespace {

class Metrics : public ::testing::Test {
 protected:
  CameraRig rig;
  std::vector<InstrumentModel> models = make_instrument_set(1, 13);

  Pose7D random_pose(Rng& rng) {
    Pose7D p;
    p.translation = Vec3(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(400, 1500));
    p.rotation6 = matrix_to_rot6d(random_rotation(rng));
    p.articulation = rng.uniform(0.0, kMaxArticulation);
    return p;
  }

  static std::vector<Vec3> posed(const Pose7D& p, const InstrumentModel& m) { return apply_pose(p, m, PointSet::Surface); }
};

TEST_F(Metrics, AddMatchesBruteForce) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto& m = models[i % 13];
    const Pose7D a = random_pose(rng), b = random_pose(rng);
    const auto pa = posed(a, m), pb = posed(b, m);
    EXPECT_LT(test::relative_error(add(a, b, m), test::mean_of_norms(pa, pb)), 1e-12);
    EXPECT_LT(test::relative_error(add_s(a, b, m), test::mean_nearest(pb, pa)), 1e-12);
    EXPECT_EQ(mpvpe(a, b, m), add(a, b, m));
  }
}

TEST_F(Metrics, PureOffsetGivesItsLength) {
  Rng rng(2);
  const Pose7D gt = random_pose(rng);
  Pose7D pred = gt;
  pred.translation += Vec3(3, 4, 0);
  EXPECT_NEAR(add(pred, gt, models[0]), 5.0, 1e-9);
  EXPECT_EQ(add(gt, gt, models[0]), 0.0);
  EXPECT_EQ(add_s(gt, gt, models[0]), 0.0);
}

TEST_F(Metrics, SymmetricAddNeverExceedsAdd) {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto& m = models[i % 13];
    const Pose7D gt = random_pose(rng);
    Pose7D pred = gt;
    pred.translation += Vec3(rng.normal(0, 20), rng.normal(0, 20), rng.normal(0, 20));
    if (i % 2) pred = random_pose(rng);
    ASSERT_LE(add_s(pred, gt, m), add(pred, gt, m) + 1e-12);
  }
}

TEST_F(Metrics, MirrorSymmetricModel) {
  // Every point has a partner rotated half a turn about z, so a half-turned pose is indistinguishable.
  InstrumentModel m;
  Rng rng(4);
  for (int i = 0; i < 32; ++i) {
    const Vec3 p(rng.uniform(-50, 50), rng.uniform(-10, 10), rng.uniform(-5, 5));
    m.part_a.push_back(p);
    m.part_a.emplace_back(-p.x(), -p.y(), p.z());
    const Vec3 q(rng.uniform(-50, 50), rng.uniform(-10, 10), rng.uniform(-5, 5));
    m.part_b.push_back(q);
    m.part_b.emplace_back(-q.x(), -q.y(), q.z());
  }
  Pose7D gt;
  gt.translation = Vec3(0, 0, 800);
  gt.rotation6 = matrix_to_rot6d(Mat3::Identity());
  gt.articulation = 0.0;
  Pose7D pred = gt;
  pred.rotation6 = matrix_to_rot6d(axis_rotation(Vec3::UnitZ(), std::numbers::pi));
  EXPECT_LT(add_s(pred, gt, m), 1e-9);
  EXPECT_GT(add(pred, gt, m), 1.0);
}

TEST_F(Metrics, RigidMotionInvariance) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto& m = models[i % 13];
    const Pose7D a = random_pose(rng), b = random_pose(rng);
    const Mat3 r = random_rotation(rng);
    const Vec3 t(rng.normal(0, 50), rng.normal(0, 50), rng.normal(0, 50));
    auto move = [&](const Pose7D& p) {
      Pose7D q = p;
      q.rotation6 = matrix_to_rot6d(r * rot6d_to_matrix(p.rotation6).matrix());
      q.translation = r * p.translation + t;
      return q;
    };
    EXPECT_NEAR(add(move(a), move(b), m), add(a, b, m), 1e-9);
    EXPECT_NEAR(add_s(move(a), move(b), m), add_s(a, b, m), 1e-9);
  }
}

TEST_F(Metrics, ClassMismatchRejected) {
  PosePair p;
  p.class_id = 0;
  p.pred_class = 1;
  EXPECT_THROW(add(p, models[0]), ClassMismatch);
  p.pred_class = 0;
  EXPECT_THROW(add_s(p, models[1]), ClassMismatch);
}

TEST_F(Metrics, AccuracyExtremes) {
  Rng rng(6);
  std::vector<PosePair> exact, far;
  for (int i = 0; i < 26; ++i) {
    PosePair p;
    p.class_id = p.pred_class = i % 13;
    p.gt = p.pred = random_pose(rng);
    exact.push_back(p);
    p.pred.translation += Vec3(0, 0, 1000);
    far.push_back(p);
  }
  EXPECT_EQ(add_s_accuracy(exact, models).aggregate, 1.0);
  EXPECT_EQ(add_s_accuracy(far, models).aggregate, 0.0);
  EXPECT_EQ(add_s_accuracy(exact, models).per_class.size(), 13u);
  EXPECT_THROW(add_s_accuracy(std::span<const PosePair>{}, models), EmptyInput);
  EXPECT_THROW(add_s_accuracy(exact, models, 0.0), InvalidArgument);
}

TEST_F(Metrics, AccuracyIsMonotoneInThreshold) {
  Rng rng(7);
  std::vector<PosePair> pairs;
  for (int i = 0; i < 200; ++i) {
    PosePair p;
    p.class_id = p.pred_class = i % 13;
    p.gt = random_pose(rng);
    p.pred = p.gt;
    p.pred.translation += Vec3(rng.normal(0, 15), rng.normal(0, 15), rng.normal(0, 15));
    pairs.push_back(p);
  }
  double prev = 0.0;
  for (double f : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5}) {
    const double acc = add_s_accuracy(pairs, models, f).aggregate;
    EXPECT_GE(acc, prev);
    prev = acc;
  }
}

TEST_F(Metrics, AggregateIsCountWeighted) {
  Rng rng(8);
  std::vector<PosePair> pairs;
  double sum = 0.0;
  for (int i = 0; i < 40; ++i) {
    PosePair p;
    p.class_id = p.pred_class = i < 30 ? 0 : 5;
    p.gt = random_pose(rng);
    p.pred = random_pose(rng);
    sum += test::mean_of_norms(posed(p.pred, models[p.class_id]), posed(p.gt, models[p.class_id]));
    pairs.push_back(p);
  }
  const MetricReport r = add_report(pairs, models);
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_EQ(r.per_class[0].count, 30u);
  EXPECT_EQ(r.per_class[1].count, 10u);
  EXPECT_NEAR(r.aggregate, sum / 40.0, 1e-9);
  EXPECT_NEAR(r.aggregate, (30 * r.per_class[0].value + 10 * r.per_class[1].value) / 40.0, 1e-9);
  EXPECT_EQ(r.count, 40u);
  EXPECT_EQ(r.model_set_digest, model_set_digest(models));
}

TEST(Confusion, Identity) {
  std::vector<int> labels;
  for (int i = 0; i < 130; ++i) labels.push_back(i % 13);
  const auto m = confusion_matrix(labels, labels, 13);
  for (int r = 0; r < 13; ++r)
    for (int c = 0; c < 13; ++c) EXPECT_EQ(m(r, c), r == c ? 1.0 : 0.0);
}

TEST(Confusion, EverythingPredictedAsZero) {
  std::vector<int> gt, pred;
  for (int i = 0; i < 26; ++i) {
    gt.push_back(i % 13);
    pred.push_back(0);
  }
  const auto m = confusion_matrix(pred, gt, 13);
  for (int r = 0; r < 13; ++r) {
    EXPECT_EQ(m(r, 0), 1.0);
    for (int c = 1; c < 13; ++c) EXPECT_EQ(m(r, c), 0.0);
  }
}

TEST(Confusion, RowsSumToOneAndEmptyRowsStayZero) {
  const std::vector<int> gt{0, 0, 1, 1, 1}, pred{0, 1, 1, 2, 1};
  const auto m = confusion_matrix(pred, gt, 4);
  EXPECT_DOUBLE_EQ(m(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(m(1, 1), 2.0 / 3.0);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(m(3, c), 0.0);
  EXPECT_THROW(confusion_matrix(std::vector<int>{0}, gt, 4), LengthMismatch);
  EXPECT_THROW(confusion_matrix(std::vector<int>{9}, std::vector<int>{0}, 4), ClassOutOfRange);
}

TEST(Confusion, MockMislabelRateShowsOnDiagonal) {
  CameraRig rig;
  const auto models = make_instrument_set(1, 13);
  const auto rec = make_record(models, rig, PoseSampler{}, 0, std::nullopt);
  NoiseConfig noise{0.0, 0.0, 0.02, 0.1, 1.0};
  Rng rng(9);
  std::vector<int> gt, pred;
  StereoObservation obs = rec.observation;
  for (int i = 0; i < 100000; ++i) {
    obs.class_id = i % 13;
    gt.push_back(obs.class_id);
    pred.push_back(perturb_observation(obs, noise, 13, rng).class_id);
  }
  const auto m = confusion_matrix(pred, gt, 13);
  for (int r = 0; r < 13; ++r) {
    EXPECT_GE(m(r, r), 0.97);
    EXPECT_LE(m(r, r), 0.99);
  }
}

}  // namespace
}  // namespace stereopose
