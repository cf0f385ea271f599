#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "stereopose/dataset_io.hpp"
#include "stereopose/kernels.hpp"
#include "stereopose/synth.hpp"

namespace stereopose {
namespace {

class Synth : public ::testing::Test {
 protected:
  CameraRig rig;
  std::vector<InstrumentModel> models = make_instrument_set(1, 13);
};

TEST_F(Synth, SamplePoseIsDeterministicAndInRange) {
  PoseSampler s;
  s.seed = 42;
  const Pose7D a = sample_pose(s, models[0], rig), b = sample_pose(s, models[0], rig);
  EXPECT_EQ(a.to_array(), b.to_array());

  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const Pose7D p = sample_pose(s, models[i % 13], rig, rng);
    ASSERT_GE(p.translation.z(), 400.0);
    ASSERT_LE(p.translation.z(), 1500.0);
    ASSERT_GE(p.articulation, 0.0);
    ASSERT_LE(p.articulation, kMaxArticulation);
  }
}

TEST_F(Synth, ImpossibleRangeExhaustsAttempts) {
  PoseSampler s;
  s.min_translation = Vec3(5000, 5000, 400);
  s.max_translation = Vec3(6000, 6000, 500);
  s.max_attempts = 10;
  EXPECT_THROW(sample_pose(s, models[0], rig), FrustumExhausted);
}

TEST_F(Synth, NoiseFreeRecordsReprojectAndTriangulate) {
  PoseSampler s;
  s.seed = 3;
  double worst_px = 0.0, worst_mm = 0.0;
  for (const auto& rec : generate_records(models, rig, s, 500, std::nullopt)) {
    for (int k = 0; k < kKeypointCount; ++k) {
      const auto& kp = rec.observation.keypoints[k];
      if (!kp.visible) continue;
      const Vec3& p = rec.keypoints3d[k];
      const Vec2 l = project_point(rig, Eye::Left, p), r = project_point(rig, Eye::Right, p);
      worst_px = std::max({worst_px, (l - Vec2(kp.u_left, kp.v_left)).norm(), (r - Vec2(kp.u_right, kp.v_right)).norm()});
      worst_mm = std::max(worst_mm, (triangulate(rig, {kp.u_left, kp.v_left}, {kp.u_right, kp.v_right}) - p).norm());
    }
  }
  EXPECT_LT(worst_px, 1e-6);
  EXPECT_LT(worst_mm, 1e-6);
}

TEST_F(Synth, IdentityNoiseLeavesObservationUnchanged) {
  NoiseConfig none{0.0, 0.0, 0.0, 0.1, 1.0};
  PoseSampler s;
  const auto rec = make_record(models, rig, s, 0, std::nullopt);
  Rng rng(1);
  const StereoObservation out = perturb_observation(rec.observation, none, 13, rng);
  EXPECT_EQ(out.class_id, rec.observation.class_id);
  EXPECT_EQ(out.score, rec.observation.score);
  for (int k = 0; k < kKeypointCount; ++k) {
    EXPECT_EQ(out.keypoints[k].u_left, rec.observation.keypoints[k].u_left);
    EXPECT_EQ(out.keypoints[k].v_right, rec.observation.keypoints[k].v_right);
    EXPECT_EQ(out.keypoints[k].visible, rec.observation.keypoints[k].visible);
  }
}

TEST_F(Synth, FullDropoutHidesEverything) {
  NoiseConfig all{0.0, 1.0, 0.0, 0.1, 1.0};
  const auto rec = make_record(models, rig, PoseSampler{}, 1, std::nullopt);
  Rng rng(1);
  EXPECT_EQ(perturb_observation(rec.observation, all, 13, rng).visible_count(), 0);
}

TEST_F(Synth, KeypointNoiseHasRequestedSigma) {
  NoiseConfig n{2.0, 0.0, 0.0, 0.1, 1.0};
  Rng rng(77);
  double sum = 0.0, sum2 = 0.0;
  int count = 0;
  std::uint64_t index = 0;
  while (count < 10000) {
    const auto rec = make_record(models, rig, PoseSampler{}, index++, std::nullopt);
    const auto noisy = perturb_observation(rec.observation, n, 13, rng);
    for (int k = 0; k < kKeypointCount && count < 10000; ++k) {
      if (!rec.observation.keypoints[k].visible) continue;
      const double d = noisy.keypoints[k].u_left - rec.observation.keypoints[k].u_left;
      sum += d;
      sum2 += d * d;
      ++count;
    }
  }
  const double sd = std::sqrt(sum2 / count - (sum / count) * (sum / count));
  EXPECT_GE(sd, 1.9);
  EXPECT_LE(sd, 2.1);
}

TEST_F(Synth, MisclassificationPicksAnotherClass) {
  NoiseConfig n{0.0, 0.0, 1.0, 0.1, 1.0};
  Rng rng(2);
  const auto rec = make_record(models, rig, PoseSampler{}, 4, std::nullopt);
  for (int i = 0; i < 50; ++i) {
    const int c = perturb_observation(rec.observation, n, 13, rng).class_id;
    EXPECT_NE(c, rec.class_id);
    EXPECT_GE(c, 0);
    EXPECT_LT(c, 13);
  }
}

TEST_F(Synth, ClassHistogramIsUniform) {
  constexpr int n = 100000;
  std::vector<int> counts(13, 0);
  PoseSampler s;
  s.seed = 9;
  // The class is the first draw of each record stream, so it can be checked without sampling poses.
  for (int i = 0; i < n; ++i) ++counts[Rng::stream(s.seed, static_cast<std::uint64_t>(i)).uniform_int(13)];
  const auto recs = generate_records(models, rig, s, 200, std::nullopt);
  for (int i = 0; i < 200; ++i)
    EXPECT_EQ(recs[i].class_id, Rng::stream(s.seed, static_cast<std::uint64_t>(i)).uniform_int(13));
  const double p = 1.0 / 13.0, sd = std::sqrt(n * p * (1 - p));
  for (int c : counts) EXPECT_NEAR(c, n * p, 3.0 * sd);
}

TEST_F(Synth, DatasetIdenticalAcrossWorkerCounts) {
  PoseSampler s;
  s.seed = 12;
  auto bytes = [&](int threads) {
    const int saved = kernels::thread_count();
    kernels::set_thread_count(threads);
    std::ostringstream out;
    write_dataset(out, generate_dataset(models, 1, rig, s, 400, NoiseConfig{}));
    kernels::set_thread_count(saved);
    return out.str();
  };
  EXPECT_EQ(bytes(1), bytes(8));
}

TEST_F(Synth, SingleObjectSequence) {
  SequenceConfig c;
  c.n_frames = 40;
  c.seed = 3;
  const Sequence seq = generate_sequence(models, rig, c);
  ASSERT_EQ(seq.frames.size(), 40u);
  const int cls = seq.frames[0][0].record.class_id;
  for (const auto& f : seq.frames) {
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].record.class_id, cls);
    EXPECT_EQ(f[0].record.observation.class_id, cls);
  }
}

TEST_F(Synth, CrossingObjectsOverlapMidway) {
  SequenceConfig c;
  c.n_frames = 61;
  c.n_objects = 2;
  c.motion.kind = MotionKind::Crossing;
  c.seed = 4;
  const Sequence seq = generate_sequence(models, rig, c);
  const auto& mid = seq.frames[30];
  ASSERT_EQ(mid.size(), 2u);
  EXPECT_GT(test::box_iou_oracle(mid[0].record.observation.box_left, mid[1].record.observation.box_left), 0.0);
}

TEST_F(Synth, OcclusionWindowLowersScores) {
  SequenceConfig c;
  c.n_frames = 50;
  c.seed = 5;
  c.occlusions = {OcclusionWindow{0, 30, 40, 0.2, 0.0}};
  const Sequence seq = generate_sequence(models, rig, c);
  for (int f = 0; f < 50; ++f) {
    const double score = seq.frames[f][0].record.observation.score;
    if (f >= 30 && f <= 40)
      EXPECT_LT(score, 0.25) << f;
    else
      EXPECT_GT(score, 0.25) << f;
  }
}

TEST_F(Synth, DatasetFileRoundTrips) {
  PoseSampler s;
  s.seed = 6;
  const Dataset d = generate_dataset(models, 1, rig, s, 50, NoiseConfig{});
  std::stringstream a;
  write_dataset(a, d);
  const Dataset back = read_dataset(a);
  std::ostringstream b;
  write_dataset(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back.records.size(), 50u);
  EXPECT_EQ(back.header.model_count, 13);
  ASSERT_TRUE(back.header.noise.has_value());
}

TEST_F(Synth, SequenceFileRoundTrips) {
  SequenceConfig c;
  c.n_frames = 20;
  c.n_objects = 2;
  c.seed = 8;
  const SequenceFile f{rig, 1, 13, generate_sequence(models, rig, c)};
  std::stringstream a;
  write_sequence(a, f);
  const SequenceFile back = read_sequence(a);
  std::ostringstream b;
  write_sequence(b, back);
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(Synth, MalformedFilesAreRejected) {
  std::stringstream bad_magic("stereopose-nothing 1 {}\n");
  EXPECT_THROW(read_dataset(bad_magic), IoFailure);
  PoseSampler s;
  std::stringstream good;
  write_dataset(good, generate_dataset(models, 1, rig, s, 3, std::nullopt));
  std::string text = good.str();
  text.resize(text.size() - 40);
  std::stringstream truncated(text);
  EXPECT_THROW(read_dataset(truncated), IoFailure);
  EXPECT_THROW(load_dataset("/nonexistent/file.ds"), IoFailure);
}

}  // namespace
}  // namespace stereopose
