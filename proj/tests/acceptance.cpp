// Runs the acceptance criteria end to end and prints one PASS/FAIL line per criterion.
//
//   acceptance --cli path/to/stereopose [--criteria 2,3,4] [--work-dir dir]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "stereopose/compare.hpp"
#include "stereopose/fitter.hpp"
#include "stereopose/kernels.hpp"
#include "stereopose/metrics.hpp"
#include "stereopose/tracker.hpp"
#include "stereopose/training.hpp"

namespace fs = std::filesystem;
using namespace stereopose;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void info(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Context {
  CameraRig rig;
  std::vector<InstrumentModel> models = make_instrument_set(1, 13);
  std::string cli;
  fs::path work;
};

// ---------------------------------------------------------------------------

Outcome ablation_trend(const Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  PoseSampler train_sampler;
  train_sampler.seed = 1;
  PoseSampler eval_sampler;
  eval_sampler.seed = 99;
  const auto train_set = generate_records(ctx.models, ctx.rig, train_sampler, 20000, std::nullopt);
  const auto eval_set = generate_records(ctx.models, ctx.rig, eval_sampler, 1000, std::nullopt);
  TrainConfig tc;
  tc.epochs = 30;
  tc.seed = 1;
  const auto configs = ablation_configs(13);
  const auto rows = run_ablation(configs, train_set, eval_set, ctx.models, ctx.rig, tc);
  const double elapsed = seconds_since(t0);

  for (const auto& r : rows) o.info(fmt("%-20s MPVPE %7.2f mm  final loss %8.3f  %6.0f s", r.name.c_str(), r.mpvpe, r.final_loss, r.seconds));
  bool ordered = true;
  for (std::size_t i = 1; i < rows.size(); ++i) ordered = ordered && rows[i - 1].mpvpe > rows[i].mpvpe;
  o.check(ordered, "MPVPE strictly decreases mono > stereo > +kp-onehot > +6d");
  const double ratio = rows[1].mpvpe / rows[0].mpvpe;
  o.check(ratio <= 0.8, fmt("stereo/mono = %.3f <= 0.8 (reference ratio 28.9/64.0 = %.3f)", ratio, 28.9 / 64.0));
  o.info(fmt("onehot/stereo = %.3f (reference %.3f), 6d/onehot = %.3f (reference %.3f)", rows[2].mpvpe / rows[1].mpvpe,
             23.0 / 28.9, rows[3].mpvpe / rows[2].mpvpe, 11.8 / 23.0));
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const double budget = 45.0 * 60.0 * 4.0 / std::min(cores, 4u);
  o.check(elapsed <= budget, fmt("runtime %.0f s within %.0f s (45 min on 4 cores, scaled to %u core%s)", elapsed, budget,
                                 std::min(cores, 4u), cores == 1 ? "" : "s"));
  return o;
}

// ---------------------------------------------------------------------------

Pose7D nudge(const Pose7D& p, Rng& rng) {
  Pose7D q = p;
  q.translation += Vec3(rng.normal(0, 3), rng.normal(0, 3), rng.normal(0, 3));
  q.rotation6 = matrix_to_rot6d(axis_rotation(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(), 0.05) *
                                rot6d_to_matrix(p.rotation6).matrix());
  q.articulation = std::clamp(p.articulation + rng.normal(0, 0.03), 0.0, kMaxArticulation);
  return q;
}

Outcome fitting_convergence(const Context& ctx) {
  Outcome o;
  const auto t0 = Clock::now();
  PoseSampler s;
  s.seed = 2024;
  const auto recs = generate_records(ctx.models, ctx.rig, s, 100, std::nullopt);
  FitConfig cfg;
  cfg.seed = 7;
  int converged = 0, below_2mm = 0;
  double mpvpe_sum = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& m = ctx.models[recs[i].class_id];
    cfg.seed = 7 + i;
    const FitResult r = fit_pose(std::nullopt, recs[i].observation, m, ctx.rig, cfg, FitMode::InitFrame);
    if (r.loss_px >= cfg.early_stop_px) continue;
    ++converged;
    const double e = mpvpe(r.pose, recs[i].pose, m);
    mpvpe_sum += e;
    worst = std::max(worst, e);
    below_2mm += e < 2.0 ? 1 : 0;
  }
  o.check(converged >= 90, fmt("init mode: %d/100 below 4 px (need >= 90)", converged));
  const double mean = converged > 0 ? mpvpe_sum / converged : INFINITY;
  o.check(mean < 2.0, fmt("init mode: mean MPVPE over converged fits %.3f mm < 2 mm", mean));
  o.info(fmt("init mode: %d/%d converged fits individually below 2 mm, worst %.2f mm", below_2mm, converged, worst));

  Rng rng(11);
  int tracked = 0, max_iters = 0;
  for (const auto& rec : recs) {
    const FitResult r =
        fit_pose(nudge(rec.pose, rng), rec.observation, ctx.models[rec.class_id], ctx.rig, cfg, FitMode::TrackFrame);
    tracked += r.loss_px < cfg.early_stop_px && r.iterations <= 100 ? 1 : 0;
    max_iters = std::max(max_iters, r.iterations);
  }
  o.check(tracked >= 95, fmt("track mode: %d/100 converge within 100 iterations (need >= 95, max used %d)", tracked, max_iters));
  const double elapsed = seconds_since(t0);
  o.check(elapsed <= 300.0, fmt("runtime %.1f s <= 300 s", elapsed));
  return o;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness(const Context& ctx) {
  Outcome o;
  PoseSampler s;
  s.seed = 77;
  const auto recs = generate_records(ctx.models, ctx.rig, s, 10, NoiseConfig{});
  const auto variants = ablation_configs(13);

  double worst_net = 0.0;
  std::size_t probes = 0;
  std::set<std::string> tensors_seen;
  for (int draw = 0; draw < 10; ++draw) {
    const ModelConfig mc = variants[draw % variants.size()].model;
    TransformerParams params = init_params(mc, 500 + draw);
    Rng rng(600 + draw);
    for (auto& v : params.values) v += 0.02 * rng.normal();
    const auto& rec = recs[draw];
    const auto& model = ctx.models[rec.class_id];
    const LossResult analytic = loss(params, rec, model, ctx.rig);
    for (const auto& info : params.tensors) {
      tensors_seen.insert(info.name);
      for (int k = 0; k < 2; ++k) {
        const std::size_t i = info.offset + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(info.size())));
        const double saved = params.values[i];
        const double numeric = test::central_difference(
            [&](double v) {
              params.values[i] = v;
              return loss(params, rec, model, ctx.rig).terms.total;
            },
            saved, 1e-3);
        params.values[i] = saved;
        worst_net = std::max(worst_net, test::relative_error(analytic.gradient[i], numeric));
        ++probes;
      }
    }
  }
  o.check(worst_net < 1e-4, fmt("network loss: worst relative error %.2e over %zu probes, %zu tensors, 10 draws (< 1e-4)",
                                worst_net, probes, tensors_seen.size()));

  double worst_fit = 0.0;
  Rng rng(9);
  for (int draw = 0; draw < 10; ++draw) {
    const auto& rec = recs[draw];
    const auto& model = ctx.models[rec.class_id];
    Pose7D p = nudge(rec.pose, rng);
    p.articulation = std::clamp(p.articulation, 0.05, kMaxArticulation - 0.05);
    const auto analytic = reprojection_loss(p, rec.observation, model, ctx.rig);
    const auto a = p.to_array();
    constexpr double h = 1e-6;
    for (std::size_t j = 0; j < Pose7D::kSize; ++j) {
      auto up = a, down = a;
      up[j] += h;
      down[j] -= h;
      const double numeric = (reprojection_loss(Pose7D::from_array(up), rec.observation, model, ctx.rig).loss -
                              reprojection_loss(Pose7D::from_array(down), rec.observation, model, ctx.rig).loss) /
                             (2 * h);
      worst_fit = std::max(worst_fit, test::relative_error(analytic.gradient[j], numeric));
    }
  }
  o.check(worst_fit < 1e-4, fmt("reprojection loss: worst relative error %.2e over 10 poses x 10 values (< 1e-4)", worst_fit));
  return o;
}

// ---------------------------------------------------------------------------

Outcome geometry_oracles(const Context& ctx) {
  Outcome o;
  Rng rng(4);
  double worst_ortho = 0.0, worst_round = 0.0;
  for (int i = 0; i < 10000; ++i) {
    Rot6 r6;
    for (int k = 0; k < 6; ++k) r6[k] = rng.normal();
    const Mat3 r = rot6d_to_matrix(r6).matrix();
    worst_ortho = std::max(worst_ortho, (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff());
    worst_ortho = std::max(worst_ortho, std::abs(r.determinant() - 1.0));
    const Mat3 back = rot6d_to_matrix(matrix_to_rot6d(r)).matrix();
    worst_round = std::max(worst_round, (back - r).cwiseAbs().maxCoeff());
  }
  o.check(worst_ortho < 1e-9, fmt("rot6d orthonormality: worst %.1e over 10^4 samples", worst_ortho));
  o.check(worst_round < 1e-9, fmt("rot6d round trip: worst %.1e over 10^4 samples", worst_round));

  double worst_tri = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p(rng.uniform(-200, 200), rng.uniform(-200, 200), rng.uniform(400, 1500));
    const Vec3 q = triangulate(ctx.rig, project_point(ctx.rig, Eye::Left, p), project_point(ctx.rig, Eye::Right, p));
    worst_tri = std::max(worst_tri, (q - p).norm());
  }
  o.check(worst_tri < 1e-6, fmt("project -> triangulate: worst %.1e mm", worst_tri));

  double worst_rigid = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto& m = ctx.models[i % 13];
    Pose7D pose;
    pose.translation = Vec3(rng.normal(0, 100), rng.normal(0, 100), rng.uniform(400, 1500));
    pose.rotation6 = matrix_to_rot6d(random_rotation(rng));
    pose.articulation = rng.uniform(0, kMaxArticulation);
    const auto pts = apply_pose(pose, m, PointSet::Surface);
    const double rest_theta = pose.articulation;
    Pose7D rest;
    rest.articulation = rest_theta;
    const auto ref = apply_pose(rest, m, PointSet::Surface);
    for (std::size_t k = 0; k < 40; ++k) {
      const std::size_t a = rng.uniform_int(static_cast<int>(pts.size())), b = rng.uniform_int(static_cast<int>(pts.size()));
      worst_rigid = std::max(worst_rigid, std::abs((pts[a] - pts[b]).norm() - (ref[a] - ref[b]).norm()));
    }
  }
  o.check(worst_rigid < 1e-9, fmt("apply_pose rigidity: worst distance change %.1e mm", worst_rigid));

  int agree = 0;
  constexpr int trials = 1000;
  EpipolarConfig ecfg;
  for (int t = 0; t < trials; ++t) {
    const std::size_t nl = rng.uniform_int(5), nr = rng.uniform_int(5);
    auto random_det = [&] {
      Detection2D d;
      d.class_id = rng.uniform_int(3);
      const double y = rng.uniform(100, 1000);
      d.box = {0, y, 50, y + 50};
      for (auto& k : d.keypoints) k = {rng.uniform(0, 1000), y + rng.uniform(0, 50), true};
      return d;
    };
    // Right detections are mostly noisy copies of left ones so that many pairs fall under the cost gate.
    std::vector<Detection2D> left, right;
    for (std::size_t i = 0; i < nl; ++i) left.push_back(random_det());
    for (std::size_t j = 0; j < nr; ++j) {
      Detection2D d = j < nl && rng.bernoulli(0.7) ? left[j] : random_det();
      for (auto& k : d.keypoints) {
        k.v += rng.normal(0, 3);
        k.visible = rng.bernoulli(0.9);
      }
      right.push_back(d);
    }
    std::vector<double> cost(nl * nr);
    for (std::size_t i = 0; i < nl; ++i)
      for (std::size_t j = 0; j < nr; ++j) cost[i * nr + j] = test::epipolar_cost_oracle(left[i], right[j], ecfg.class_penalty);
    const auto best = test::brute_force_assignment(cost, nl, nr, ecfg.max_cost);
    const auto got = epipolar_match(left, right, ctx.rig, ecfg);
    double total = 0.0;
    for (const auto& [i, j] : got) total += cost[i * nr + j];
    agree += got == best.pairs && std::abs(total - best.total) < 1e-9 ? 1 : 0;
  }
  o.check(agree == trials, fmt("epipolar_match equals brute force on %d/%d random <=4x4 instances", agree, trials));
  return o;
}

// ---------------------------------------------------------------------------

Outcome metric_oracles(const Context& ctx) {
  Outcome o;
  Rng rng(5);
  auto random_pose = [&] {
    Pose7D p;
    p.translation = Vec3(rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(400, 1500));
    p.rotation6 = matrix_to_rot6d(random_rotation(rng));
    p.articulation = rng.uniform(0, kMaxArticulation);
    return p;
  };
  double worst_add = 0.0;
  bool ordered = true;
  for (int i = 0; i < 10000; ++i) {
    const auto& m = ctx.models[i % 13];
    const Pose7D gt = random_pose();
    Pose7D pred = gt;
    pred.translation += Vec3(rng.normal(0, 20), rng.normal(0, 20), rng.normal(0, 20));
    if (i % 2) pred = random_pose();
    const double a = add(pred, gt, m), as = add_s(pred, gt, m);
    ordered = ordered && as <= a + 1e-12;
    if (i < 200) {
      const auto pp = apply_pose(pred, m, PointSet::Surface), pg = apply_pose(gt, m, PointSet::Surface);
      worst_add = std::max(worst_add, std::abs(a - test::mean_of_norms(pp, pg)));
    }
  }
  o.check(worst_add < 1e-9, fmt("add vs brute-force mean of norms: worst %.1e mm", worst_add));
  o.check(ordered, "add_s <= add on 10^4 random pairs");

  InstrumentModel sym;
  for (int i = 0; i < 32; ++i) {
    const Vec3 p(rng.uniform(-50, 50), rng.uniform(-10, 10), rng.uniform(-5, 5));
    sym.part_a.push_back(p);
    sym.part_a.emplace_back(-p.x(), -p.y(), p.z());
    const Vec3 q(rng.uniform(-50, 50), rng.uniform(-10, 10), rng.uniform(-5, 5));
    sym.part_b.push_back(q);
    sym.part_b.emplace_back(-q.x(), -q.y(), q.z());
  }
  Pose7D gt;
  gt.translation = Vec3(0, 0, 800);
  Pose7D turned = gt;
  turned.rotation6 = matrix_to_rot6d(axis_rotation(Vec3::UnitZ(), std::acos(-1.0)));
  const double s_sym = add_s(turned, gt, sym), a_sym = add(turned, gt, sym);
  o.check(s_sym < 1e-9 && a_sym > 0.0, fmt("mirror-symmetric model: add_s %.1e, add %.2f mm", s_sym, a_sym));

  std::vector<PosePair> pairs;
  for (int i = 0; i < 500; ++i) {
    PosePair p;
    p.class_id = p.pred_class = i % 13;
    p.gt = random_pose();
    p.pred = p.gt;
    p.pred.translation += Vec3(rng.normal(0, 15), rng.normal(0, 15), rng.normal(0, 15));
    pairs.push_back(p);
  }
  bool monotone = true;
  double prev = 0.0;
  std::string curve;
  for (double f : {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0}) {
    const double acc = add_s_accuracy(pairs, ctx.models, f).aggregate;
    monotone = monotone && acc >= prev;
    prev = acc;
    curve += fmt(" %.2f:%.3f", f, acc);
  }
  o.check(monotone, "add_s_accuracy monotone in the threshold fraction:" + curve);
  return o;
}

// ---------------------------------------------------------------------------

struct IdCheck {
  bool bijection = true;
  int objects = 0;
  int tracks = 0;
};

IdCheck check_ids(const Context& ctx, const SequenceConfig& c) {
  const Sequence seq = generate_sequence(ctx.models, ctx.rig, c);
  const auto frames = track_sequence(seq, ctx.rig, TrackerConfig{}, 13);
  std::map<int, int> track_to_gt, gt_to_track;
  IdCheck r;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].objects.size() != seq.frames[f].size()) r.bijection = false;
    for (const auto& obj : frames[f].objects) {
      const int gt = frames[f].detection_gt_ids[obj.left_detection];
      const auto [a, fresh_a] = track_to_gt.emplace(obj.track_id, gt);
      const auto [b, fresh_b] = gt_to_track.emplace(gt, obj.track_id);
      if (a->second != gt || b->second != obj.track_id) r.bijection = false;
    }
  }
  r.objects = static_cast<int>(gt_to_track.size());
  r.tracks = static_cast<int>(track_to_gt.size());
  r.bijection = r.bijection && r.objects == c.n_objects && r.tracks == c.n_objects;
  return r;
}

Outcome tracking_properties(const Context& ctx) {
  Outcome o;
  SequenceConfig still;
  still.n_frames = 100;
  still.motion.kind = MotionKind::Static;
  still.seed = 101;
  SequenceConfig crossing;
  crossing.n_frames = 61;
  crossing.n_objects = 2;
  crossing.motion.kind = MotionKind::Crossing;
  crossing.seed = 102;
  SequenceConfig occluded;
  occluded.n_frames = 60;
  occluded.seed = 103;
  occluded.occlusions = {OcclusionWindow{0, 25, 34, 0.2, 0.0}};
  for (const auto& [name, cfg] : {std::pair{"static (100 frames)", still}, std::pair{"crossing (2 objects)", crossing},
                                  std::pair{"occlusion (10-frame low-score window)", occluded}}) {
    const IdCheck r = check_ids(ctx, cfg);
    o.check(r.bijection, fmt("%s: %d ground-truth ids, %d track ids, constant bijection", name, r.objects, r.tracks));
  }

  OneEuroConfig oe;
  OneEuroState s;
  double worst_const = 0.0;
  for (int i = 0; i < 300; ++i) worst_const = std::max(worst_const, std::abs(one_euro_step(s, 123.25, i / oe.rate, oe) - 123.25));
  o.check(worst_const == 0.0, fmt("1-euro constant signal: max deviation %.1e", worst_const));
  OneEuroState n;
  Rng rng(6);
  double in2 = 0.0, out2 = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.normal(0, 2);
    const double y = one_euro_step(n, x, i / oe.rate, oe);
    in2 += x * x;
    out2 += y * y;
  }
  o.check(out2 < in2, fmt("1-euro white noise (sigma 2 px, 30 Hz): output variance %.3f < input %.3f", out2 / 1e4, in2 / 1e4));
  return o;
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const Context& ctx, const std::string& args) {
  const std::string cmd = "\"" + ctx.cli + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism(const Context& ctx) {
  Outcome o;
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) {
    o.check(false, "command-line binary not found (pass --cli)");
    return o;
  }
  const fs::path root = ctx.work / "determinism";
  fs::remove_all(root);
  auto dir = [&](const std::string& name) { return (root / name).string(); };

  struct Step {
    std::string name;
    std::function<std::string(const std::string& out_dir, int threads)> args;
    std::vector<std::string> outputs;
  };
  const std::string data = dir("a1") + "/dataset.ds";
  const std::string seq = dir("a1") + "/sequence.seq";
  const std::vector<Step> steps{
      {"synth dataset", [](const std::string& d, int t) { return fmt("--seed 3 --threads %d --out-dir %s synth --n 3000 --noise", t, d.c_str()); }, {"dataset.ds"}},
      {"synth sequence", [](const std::string& d, int t) { return fmt("--seed 3 --threads %d --out-dir %s synth --sequence smooth --frames 40 --objects 2 --noise", t, d.c_str()); }, {"sequence.seq"}},
      {"train", [&](const std::string& d, int t) { return fmt("--seed 3 --threads %d --out-dir %s train --data %s --epochs 2 --layers 2 --hidden 32 --heads 2", t, d.c_str(), data.c_str()); }, {"model.ckpt", "loss.csv"}},
      {"fit", [&](const std::string& d, int t) { return fmt("--seed 3 --threads %d --out-dir %s fit --seq %s", t, d.c_str(), seq.c_str()); }, {"fit.csv"}},
      {"track", [&](const std::string& d, int t) { return fmt("--seed 3 --threads %d --out-dir %s track --seq %s", t, d.c_str(), seq.c_str()); }, {"tracks.csv"}},
  };
  // a1 and a2 are same-seed reruns; b reruns with a different worker count.
  for (const auto& step : steps) {
    bool ran = true;
    for (const auto& [tag, threads] : {std::pair{"a1", 1}, std::pair{"a2", 1}, std::pair{"b", 4}})
      ran = ran && run_cli(ctx, step.args(dir(tag), threads)) == 0;
    if (!ran) {
      o.check(false, step.name + ": command failed");
      continue;
    }
    bool same_rerun = true, same_threads = true;
    std::size_t bytes = 0;
    for (const auto& f : step.outputs) {
      const std::string a = slurp(root / "a1" / f);
      bytes += a.size();
      same_rerun = same_rerun && !a.empty() && a == slurp(root / "a2" / f);
      same_threads = same_threads && a == slurp(root / "b" / f);
    }
    o.check(same_rerun, fmt("%s: rerun byte-identical (%zu bytes)", step.name.c_str(), bytes));
    o.check(same_threads, fmt("%s: 1 vs 4 workers byte-identical", step.name.c_str()));
  }
  return o;
}

// ---------------------------------------------------------------------------

Outcome throughput(const Context& ctx) {
  Outcome o;
  SequenceConfig c;
  c.n_frames = 100;
  c.n_objects = 3;
  c.seed = 8;
  const Sequence seq = generate_sequence(ctx.models, ctx.rig, c);
  const TransformerParams params = init_params(ModelConfig{}, 1);
  const MethodSummary net = transformer_on_sequence(params, seq, ctx.models, ctx.rig);
  const MethodSummary fit = fitting_on_sequence(seq, ctx.models, ctx.rig, FitConfig{});
  const double ratio = net.poses_per_sec() / fit.poses_per_sec();
  o.info(fmt("transformer %.0f poses/s, fitting %.0f poses/s on %zu poses", net.poses_per_sec(), fit.poses_per_sec(), net.count));
  o.check(ratio >= 10.0, fmt("transformer/fitting throughput ratio %.2f >= 10", ratio));

  const int saved = kernels::thread_count();
  kernels::set_thread_count(1);
  const auto tokens = tokenize(seq.frames[0][0].record.observation, params.config, ctx.rig);
  std::vector<double> ms;
  for (int i = 0; i < 200; ++i) {
    const auto t0 = Clock::now();
    const RawOutput raw = forward(params, tokens);
    const Pose7D pose = decode(params.config, raw).pose();
    ms.push_back(seconds_since(t0) * 1e3);
    if (!std::isfinite(pose.translation.x())) ms.back() = INFINITY;
  }
  kernels::set_thread_count(saved);
  std::sort(ms.begin(), ms.end());
  o.check(ms[ms.size() / 2] < 10.0, fmt("single-pose forward, 5 layers / 128 dims, one thread: median %.2f ms (p95 %.2f ms) < 10 ms",
                                        ms[ms.size() / 2], ms[ms.size() * 95 / 100]));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Context ctx;
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "stereopose_acceptance").string();
  app.add_option("--cli", ctx.cli, "Path to the stereopose binary");
  app.add_option("--criteria", only, "Subset to run")->delimiter(',')->check(CLI::Range(1, 8));
  app.add_option("--work-dir", work, "Scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  ctx.work = work;
  fs::create_directories(ctx.work);

  const std::vector<std::pair<const char*, Outcome (*)(const Context&)>> criteria{
      {"ablation trend", ablation_trend},           {"fitting convergence", fitting_convergence},
      {"gradient correctness", gradient_correctness}, {"geometry oracles", geometry_oracles},
      {"metric oracles", metric_oracles},           {"tracking properties", tracking_properties},
      {"determinism", determinism},                 {"throughput", throughput},
  };
  std::vector<std::string> summary;
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      out.check(false, std::string("threw: ") + e.what());
    }
    std::printf("[%d] %s (%.1f s)\n", id, criteria[i].first, seconds_since(t0));
    for (const auto& n : out.notes) std::printf("      %s\n", n.c_str());
    std::fflush(stdout);
    summary.push_back(fmt("criterion %d %-22s %s", id, criteria[i].first, out.pass ? "PASS" : "FAIL"));
    all = all && out.pass;
  }
  std::printf("\n");
  for (const auto& s : summary) std::printf("%s\n", s.c_str());
  return all ? 0 : 1;
}
