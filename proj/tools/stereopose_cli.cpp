#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "report.hpp"
#include "stereopose/checkpoint.hpp"
#include "stereopose/compare.hpp"
#include "stereopose/dataset_io.hpp"
#include "stereopose/fitter.hpp"
#include "stereopose/kernels.hpp"
#include "stereopose/metrics.hpp"
#include "stereopose/tracker.hpp"
#include "stereopose/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stereopose;
using cli::RunManifest;

namespace {

struct Global {
  std::uint64_t seed = 1;
  int threads = 0;
  std::string out_dir = ".";
};

fs::path in_out_dir(const Global& g, const std::string& name) {
  const fs::path p(name);
  return p.is_absolute() ? p : fs::path(g.out_dir) / p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open '" + path.string() + "' for writing");
  return out;
}

// ---------------------------------------------------------------------------

struct SynthOpts {
  int models = 13;
  std::optional<std::uint64_t> model_seed;
  std::size_t n = 20000;
  bool noise = false;
  NoiseConfig noise_cfg;
  std::string sequence;  // empty: dataset
  int frames = 50;
  int objects = 1;
  std::vector<std::string> occlusions;
  std::string out;
};

OcclusionWindow parse_occlusion(const std::string& s) {
  OcclusionWindow w;
  char sep1 = 0, sep2 = 0, sep3 = 0;
  std::istringstream in(s);
  in >> w.object >> sep1 >> w.first_frame >> sep2 >> w.last_frame;
  if (!in || sep1 != ':' || sep2 != ':') throw CLI::ValidationError("--occlude", "expected object:first:last[:score]");
  if (in >> sep3) {
    if (sep3 != ':' || !(in >> w.score)) throw CLI::ValidationError("--occlude", "expected object:first:last[:score]");
  }
  return w;
}

void run_synth(const Global& g, const SynthOpts& o, RunManifest& m) {
  const std::uint64_t model_seed = o.model_seed.value_or(g.seed);
  m.config() = {{"models", o.models}, {"model_seed", model_seed}, {"noise", o.noise},
                {"keypoint_sigma", o.noise_cfg.keypoint_sigma}, {"dropout_prob", o.noise_cfg.dropout_prob},
                {"misclass_prob", o.noise_cfg.misclass_prob}};
  std::optional<NoiseConfig> noise;
  if (o.noise) {
    o.noise_cfg.validate();
    noise = o.noise_cfg;
  }
  m.stage("models");
  const auto models = make_instrument_set(model_seed, o.models);
  const CameraRig rig;
  fs::path out;
  m.stage("generate");
  if (o.sequence.empty()) {
    m.config()["n"] = o.n;
    PoseSampler sampler;
    sampler.seed = g.seed;
    const Dataset data = generate_dataset(models, model_seed, rig, sampler, o.n, noise);
    m.stage("write");
    out = in_out_dir(g, o.out.empty() ? "dataset.ds" : o.out);
    save_dataset(out, data);
  } else {
    SequenceConfig sc;
    sc.n_frames = o.frames;
    sc.n_objects = o.objects;
    sc.seed = g.seed;
    sc.noise = noise;
    sc.motion.kind = o.sequence == "static"     ? MotionKind::Static
                     : o.sequence == "crossing" ? MotionKind::Crossing
                                                : MotionKind::Smooth;
    for (const auto& s : o.occlusions) sc.occlusions.push_back(parse_occlusion(s));
    m.config().update({{"sequence", o.sequence}, {"frames", o.frames}, {"objects", o.objects},
                       {"occlusions", o.occlusions}});
    SequenceFile seq{rig, model_seed, o.models, generate_sequence(models, rig, sc)};
    m.stage("write");
    out = in_out_dir(g, o.out.empty() ? "sequence.seq" : o.out);
    save_sequence(out, seq);
  }
  m.output(out);
  std::cout << "wrote " << out.string() << '\n';
}

// ---------------------------------------------------------------------------

struct NetOpts {
  std::string modality = "stereo";
  bool no_onehot = false;
  std::string rotation = "sixd";
  int layers = 5, hidden = 128, heads = 4;
};

struct TrainOpts {
  std::string data;
  int epochs = 30;
  std::size_t batch = 256;
  double lr = 1e-3;
  NetOpts net;
  std::string out = "model.ckpt";
  std::string loss_log = "loss.csv";
};

ModelConfig model_config(const NetOpts& n, int class_count) {
  ModelConfig c;
  c.layers = n.layers;
  c.hidden_dim = n.hidden;
  c.heads = n.heads;
  c.modality = n.modality == "mono" ? Modality::Mono : Modality::Stereo;
  c.keypoint_onehot = !n.no_onehot;
  c.rotation_mode = n.rotation == "axis_angle3" ? RotationMode::AxisAngle3 : RotationMode::SixD;
  c.class_count = class_count;
  c.validate();
  return c;
}

void run_train(const Global& g, const TrainOpts& o, RunManifest& m) {
  m.stage("load");
  m.input(o.data);
  const Dataset data = load_dataset(o.data);
  const auto models = make_instrument_set(data.header.model_seed, data.header.model_count);
  const ModelConfig mc = model_config(o.net, data.header.model_count);
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch = o.batch;
  tc.lr = o.lr;
  tc.seed = g.seed;
  m.config() = {{"data", o.data}, {"model", model_config_json(mc)}, {"epochs", tc.epochs}, {"batch", tc.batch},
                {"lr", tc.lr}, {"chunk", tc.chunk}};
  m.stage("train");
  const TrainResult r = train(data.records, models, data.header.rig, mc, tc, [](const StepLog& s) {
    if (s.step == 0) std::cerr << "epoch " << s.epoch << " loss " << format_number(s.mean.total, 5) << '\n';
  });
  m.stage("write");
  const auto ckpt_path = in_out_dir(g, o.out), log_path = in_out_dir(g, o.loss_log);
  save_checkpoint(ckpt_path, {r.params, g.seed, o.epochs});
  auto log = open_out(log_path);
  write_loss_log(log, r.steps);
  log.close();
  m.output(ckpt_path);
  m.output(log_path);
  std::cout << "final epoch mean loss " << format_number(r.epoch_means.back().total, 6) << '\n';
}

// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string model, data;
  double threshold = 0.10;
  std::string out = "metrics.json";
  std::string confusion = "confusion.csv";
};

json report_json(const MetricReport& r) {
  json per = json::array();
  for (const auto& c : r.per_class) per.push_back({{"class", c.class_id}, {"count", c.count}, {"value", c.value}});
  json j = {{"metric", r.metric}, {"aggregate", r.aggregate}, {"count", r.count}, {"per_class", per},
            {"model_set_digest", r.model_set_digest}};
  if (r.threshold_fraction > 0.0) j["threshold_fraction"] = r.threshold_fraction;
  return j;
}

void run_eval(const Global& g, const EvalOpts& o, RunManifest& m) {
  m.config() = {{"model", o.model}, {"data", o.data}, {"threshold_fraction", o.threshold}};
  m.stage("load");
  m.input(o.model);
  m.input(o.data);
  const Checkpoint ckpt = load_checkpoint(o.model);
  const Dataset data = load_dataset(o.data);
  const auto models = make_instrument_set(data.header.model_seed, data.header.model_count);
  if (ckpt.params.config.class_count != data.header.model_count)
    throw InvalidArgument("checkpoint expects " + std::to_string(ckpt.params.config.class_count) +
                          " classes, dataset has " + std::to_string(data.header.model_count));
  m.stage("predict");
  const auto pairs = predict_pairs(ckpt.params, data.records, data.header.rig);
  m.stage("metrics");
  const json j = {{"mpvpe", report_json(mpvpe_report(pairs, models))},
                  {"add", report_json(add_report(pairs, models))},
                  {"add_s_accuracy", report_json(add_s_accuracy(pairs, models, o.threshold))}};
  std::vector<int> pred, gt;
  for (const auto& p : pairs) {
    pred.push_back(p.pred_class);
    gt.push_back(p.class_id);
  }
  const auto cm = confusion_matrix(pred, gt, data.header.model_count);

  const auto metrics_path = in_out_dir(g, o.out), cm_path = in_out_dir(g, o.confusion);
  auto out = open_out(metrics_path);
  out << j.dump(2) << '\n';
  out.close();
  auto cmo = open_out(cm_path);
  cmo << "gt\\pred";
  for (std::size_t c = 0; c < cm.cols(); ++c) cmo << ',' << c;
  cmo << '\n';
  for (std::size_t r = 0; r < cm.rows(); ++r) {
    cmo << r;
    for (std::size_t c = 0; c < cm.cols(); ++c) cmo << ',' << format_number(cm(r, c), 6);
    cmo << '\n';
  }
  cmo.close();
  m.output(metrics_path);
  m.output(cm_path);
  std::cout << "MPVPE " << format_number(j["mpvpe"]["aggregate"].get<double>(), 5) << " mm, ADD-S accuracy "
            << format_number(j["add_s_accuracy"]["aggregate"].get<double>(), 4) << '\n';
}

// ---------------------------------------------------------------------------

struct FitOpts {
  std::string seq;
  FitConfig cfg;
  std::string out = "fit.csv";
  std::string timing = "fit_timing.csv";
};

json fit_config_json(const FitConfig& c) {
  return {{"init_iters", c.init_iters}, {"track_iters", c.track_iters}, {"early_stop_px", c.early_stop_px},
          {"lr", c.lr},                 {"translation_unit", c.translation_unit}, {"restarts", c.restarts},
          {"init_lr_decay", c.init_lr_decay}, {"seed", c.seed}};
}

void run_fit(const Global& g, FitOpts o, RunManifest& m) {
  o.cfg.seed = g.seed;
  m.config() = {{"seq", o.seq}, {"fit", fit_config_json(o.cfg)}};
  m.stage("load");
  m.input(o.seq);
  const SequenceFile seq = load_sequence(o.seq);
  const auto models = make_instrument_set(seq.model_seed, seq.model_count);
  m.stage("fit");
  const auto fits = fit_sequence(seq.sequence, models, seq.rig, o.cfg);
  m.stage("write");
  const auto fit_path = in_out_dir(g, o.out), timing_path = in_out_dir(g, o.timing);
  auto out = open_out(fit_path);
  write_fit_csv(out, fits);
  out.close();
  auto tout = open_out(timing_path);
  write_fit_timing_csv(tout, fits);
  tout.close();
  m.output(fit_path);
  m.output(timing_path);
  std::cout << "fitted " << fits.size() << " poses\n";
}

// ---------------------------------------------------------------------------

struct TrackOpts {
  std::string seq;
  TrackerConfig cfg;
  std::string out = "tracks.csv";
};

void run_track(const Global& g, const TrackOpts& o, RunManifest& m) {
  const auto& c = o.cfg;
  m.config() = {{"seq", o.seq},
                {"score_high", c.score_high},
                {"score_low", c.score_low},
                {"iou_first", c.iou_first},
                {"iou_second", c.iou_second},
                {"max_age", c.max_age},
                {"one_euro",
                 {{"min_cutoff", c.one_euro.min_cutoff}, {"beta", c.one_euro.beta}, {"d_cutoff", c.one_euro.d_cutoff}}},
                {"kalman",
                 {{"q_position", c.kalman.q_position},
                  {"q_velocity", c.kalman.q_velocity},
                  {"measurement_noise", c.kalman.measurement_noise}}}};
  m.stage("load");
  m.input(o.seq);
  const SequenceFile seq = load_sequence(o.seq);
  TrackerConfig cfg = o.cfg;
  cfg.one_euro.rate = seq.sequence.config.frame_rate;
  m.config()["one_euro"]["rate"] = cfg.one_euro.rate;
  m.stage("track");
  const auto frames = track_sequence(seq.sequence, seq.rig, cfg, seq.model_count);
  m.stage("write");
  const auto path = in_out_dir(g, o.out);
  auto out = open_out(path);
  write_tracks_csv(out, frames);
  out.close();
  m.output(path);
  std::size_t rows = 0;
  for (const auto& f : frames) rows += f.objects.size();
  std::cout << "tracked " << frames.size() << " frames, " << rows << " object rows\n";
}

// ---------------------------------------------------------------------------

struct AblateOpts {
  std::string data, eval;
  double holdout = 0.1;
  int epochs = 30;
  std::size_t batch = 256;
  double lr = 1e-3;
  std::string out = "ablation.csv";
};

void run_ablate(const Global& g, const AblateOpts& o, RunManifest& m) {
  m.config() = {{"data", o.data}, {"eval", o.eval}, {"holdout", o.holdout},
                {"epochs", o.epochs}, {"batch", o.batch}, {"lr", o.lr}};
  m.stage("load");
  m.input(o.data);
  const Dataset data = load_dataset(o.data);
  const auto models = make_instrument_set(data.header.model_seed, data.header.model_count);
  std::span<const DatasetRecord> train_set(data.records), eval_set;
  Dataset eval_data;
  if (!o.eval.empty()) {
    m.input(o.eval);
    eval_data = load_dataset(o.eval);
    if (eval_data.header.model_seed != data.header.model_seed || eval_data.header.model_count != data.header.model_count)
      throw InvalidArgument("evaluation set uses a different instrument set");
    eval_set = eval_data.records;
  } else {
    const auto n_eval = static_cast<std::size_t>(o.holdout * static_cast<double>(data.records.size()));
    if (n_eval == 0 || n_eval >= data.records.size()) throw InvalidArgument("holdout leaves an empty split");
    train_set = train_set.first(data.records.size() - n_eval);
    eval_set = std::span<const DatasetRecord>(data.records).last(n_eval);
  }
  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch = o.batch;
  tc.lr = o.lr;
  tc.seed = g.seed;
  m.stage("train");
  const auto configs = ablation_configs(data.header.model_count);
  const auto rows = run_ablation(configs, train_set, eval_set, models, data.header.rig, tc);
  m.stage("write");
  const auto path = in_out_dir(g, o.out);
  auto out = open_out(path);
  out << "rank,config,mpvpe_mm,final_loss,seconds\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i + 1 << ',' << rows[i].name << ',' << format_number(rows[i].mpvpe, 6) << ','
        << format_number(rows[i].final_loss, 6) << ',' << format_number(rows[i].seconds, 4) << '\n';
    std::cout << rows[i].name << ": MPVPE " << format_number(rows[i].mpvpe, 5) << " mm\n";
  }
  out.close();
  m.output(path);
}

// ---------------------------------------------------------------------------

struct CompareOpts {
  std::string seq, model;
  FitConfig cfg;
  std::string out = "compare.csv";
};

void run_compare(const Global& g, CompareOpts o, RunManifest& m) {
  o.cfg.seed = g.seed;
  m.config() = {{"seq", o.seq}, {"model", o.model}, {"fit", fit_config_json(o.cfg)}};
  m.stage("load");
  m.input(o.seq);
  m.input(o.model);
  const SequenceFile seq = load_sequence(o.seq);
  const Checkpoint ckpt = load_checkpoint(o.model);
  const auto models = make_instrument_set(seq.model_seed, seq.model_count);
  m.stage("transformer");
  const MethodSummary net = transformer_on_sequence(ckpt.params, seq.sequence, models, seq.rig);
  m.stage("fit");
  const MethodSummary opt = fitting_on_sequence(seq.sequence, models, seq.rig, o.cfg);
  m.stage("write");
  const auto path = in_out_dir(g, o.out);
  auto out = open_out(path);
  out << "method,count,error_mm,poses_per_sec\n";
  for (const auto& s : {net, opt}) {
    out << s.method << ',' << s.count << ',' << format_number(s.error_mm, 6) << ','
        << format_number(s.poses_per_sec(), 6) << '\n';
    std::cout << s.method << ": " << format_number(s.error_mm, 5) << " mm, "
              << format_number(s.poses_per_sec(), 5) << " poses/s\n";
  }
  out.close();
  m.output(path);
}

// ---------------------------------------------------------------------------

struct ReportOpts {
  std::vector<std::string> inputs;
};

void run_report(const Global& g, const ReportOpts& o, RunManifest& m) {
  m.config() = {{"inputs", o.inputs}};
  std::vector<fs::path> inputs;
  for (const auto& i : o.inputs) {
    m.input(i);
    inputs.emplace_back(i);
  }
  m.stage("render");
  for (const auto& p : cli::render_report(inputs, g.out_dir)) m.output(p);
}

// ---------------------------------------------------------------------------

int execute(const std::string& command, const Global& g, const std::function<void(RunManifest&)>& body) {
  try {
    fs::create_directories(g.out_dir);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::optional<cli::DirectoryLock> lock;
  try {
    lock.emplace(g.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  int threads = g.threads;
  if (threads <= 0) {
    if (const char* env = std::getenv("STEREOPOSE_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) kernels::set_thread_count(threads);

  RunManifest m(command, g.out_dir);
  int rc = 0;
  try {
    body(m);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    m.fail(e.what());
    rc = 1;
  }
  m.config()["seed"] = g.seed;
  m.config()["threads"] = kernels::thread_count();
  m.config()["out_dir"] = g.out_dir;
  try {
    m.write();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    rc = 1;
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo keypoint pose estimation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0: STEREOPOSE_THREADS or all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and the run manifest")->capture_default_str();

  const std::vector<std::string> kModalities{"mono", "stereo"}, kRotations{"sixd", "axis_angle3"};

  SynthOpts so;
  auto* synth = app.add_subcommand("synth", "Generate a dataset or an image sequence");
  synth->add_option("--models", so.models, "Number of instrument classes")->check(CLI::Range(1, kMaxInstrumentCount))->capture_default_str();
  synth->add_option("--model-seed", so.model_seed, "Instrument set seed (default: --seed)");
  synth->add_option("--n", so.n, "Records to generate")->capture_default_str();
  synth->add_flag("--noise", so.noise, "Corrupt observations with the detector noise model");
  synth->add_option("--sigma", so.noise_cfg.keypoint_sigma, "Keypoint noise (px)")->capture_default_str();
  synth->add_option("--dropout", so.noise_cfg.dropout_prob, "Keypoint dropout probability")->capture_default_str();
  synth->add_option("--misclass", so.noise_cfg.misclass_prob, "Class flip probability")->capture_default_str();
  synth->add_option("--sequence", so.sequence, "Write a sequence instead of a dataset")
      ->check(CLI::IsMember({"smooth", "static", "crossing"}));
  synth->add_option("--frames", so.frames, "Sequence length")->capture_default_str();
  synth->add_option("--objects", so.objects, "Objects per sequence")->capture_default_str();
  synth->add_option("--occlude", so.occlusions, "Low-score window object:first:last[:score]");
  synth->add_option("--out", so.out, "Output file (default dataset.ds or sequence.seq)");

  TrainOpts to;
  auto add_net = [&](CLI::App* sub, NetOpts& n) {
    sub->add_option("--modality", n.modality)->check(CLI::IsMember(kModalities))->capture_default_str();
    sub->add_flag("--no-onehot", n.no_onehot, "Drop the keypoint-index one-hot");
    sub->add_option("--rotation", n.rotation)->check(CLI::IsMember(kRotations))->capture_default_str();
    sub->add_option("--layers", n.layers)->capture_default_str();
    sub->add_option("--hidden", n.hidden)->capture_default_str();
    sub->add_option("--heads", n.heads)->capture_default_str();
  };
  auto* trainc = app.add_subcommand("train", "Train the keypoint-to-pose network");
  trainc->add_option("--data", to.data)->required()->check(CLI::ExistingFile);
  trainc->add_option("--epochs", to.epochs)->capture_default_str();
  trainc->add_option("--batch", to.batch)->capture_default_str();
  trainc->add_option("--lr", to.lr)->capture_default_str();
  add_net(trainc, to.net);
  trainc->add_option("--out", to.out)->capture_default_str();
  trainc->add_option("--loss-log", to.loss_log)->capture_default_str();

  EvalOpts eo;
  auto* evalc = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  evalc->add_option("--model", eo.model)->required()->check(CLI::ExistingFile);
  evalc->add_option("--data", eo.data)->required()->check(CLI::ExistingFile);
  evalc->add_option("--threshold", eo.threshold, "ADD-S accuracy threshold as a fraction of the diameter")
      ->capture_default_str();
  evalc->add_option("--out", eo.out)->capture_default_str();
  evalc->add_option("--confusion", eo.confusion)->capture_default_str();

  auto add_fit = [](CLI::App* sub, FitConfig& c) {
    sub->add_option("--init-iters", c.init_iters)->capture_default_str();
    sub->add_option("--track-iters", c.track_iters)->capture_default_str();
    sub->add_option("--early-stop-px", c.early_stop_px)->capture_default_str();
    sub->add_option("--fit-lr", c.lr)->capture_default_str();
    sub->add_option("--restarts", c.restarts)->capture_default_str();
  };
  FitOpts fo;
  auto* fitc = app.add_subcommand("fit", "Fit poses to a sequence by reprojection descent");
  fitc->add_option("--seq", fo.seq)->required()->check(CLI::ExistingFile);
  add_fit(fitc, fo.cfg);
  fitc->add_option("--out", fo.out)->capture_default_str();
  fitc->add_option("--timing", fo.timing)->capture_default_str();

  TrackOpts tro;
  auto* trackc = app.add_subcommand("track", "Track detections through a sequence");
  trackc->add_option("--seq", tro.seq)->required()->check(CLI::ExistingFile);
  trackc->add_option("--score-high", tro.cfg.score_high)->capture_default_str();
  trackc->add_option("--score-low", tro.cfg.score_low)->capture_default_str();
  trackc->add_option("--iou-first", tro.cfg.iou_first)->capture_default_str();
  trackc->add_option("--iou-second", tro.cfg.iou_second)->capture_default_str();
  trackc->add_option("--max-age", tro.cfg.max_age)->capture_default_str();
  trackc->add_option("--min-cutoff", tro.cfg.one_euro.min_cutoff)->capture_default_str();
  trackc->add_option("--beta", tro.cfg.one_euro.beta)->capture_default_str();
  trackc->add_option("--d-cutoff", tro.cfg.one_euro.d_cutoff)->capture_default_str();
  trackc->add_option("--out", tro.out)->capture_default_str();

  AblateOpts ao;
  auto* ablatec = app.add_subcommand("ablate", "Train and rank the four input/output variants");
  ablatec->add_option("--data", ao.data)->required()->check(CLI::ExistingFile);
  ablatec->add_option("--eval", ao.eval, "Held-out dataset (default: last --holdout share of --data)")
      ->check(CLI::ExistingFile);
  ablatec->add_option("--holdout", ao.holdout)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  ablatec->add_option("--epochs", ao.epochs)->capture_default_str();
  ablatec->add_option("--batch", ao.batch)->capture_default_str();
  ablatec->add_option("--lr", ao.lr)->capture_default_str();
  ablatec->add_option("--out", ao.out)->capture_default_str();

  CompareOpts co;
  auto* comparec = app.add_subcommand("compare-fit", "Network inference versus reprojection fitting on one sequence");
  comparec->add_option("--seq", co.seq)->required()->check(CLI::ExistingFile);
  comparec->add_option("--model", co.model)->required()->check(CLI::ExistingFile);
  add_fit(comparec, co.cfg);
  comparec->add_option("--out", co.out)->capture_default_str();

  ReportOpts ro;
  auto* reportc = app.add_subcommand("report", "Render CSV outputs into SVG plots and a summary");
  reportc->add_option("inputs", ro.inputs, "CSV files")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (synth->parsed()) return execute("synth", g, [&](RunManifest& m) { run_synth(g, so, m); });
  if (trainc->parsed()) return execute("train", g, [&](RunManifest& m) { run_train(g, to, m); });
  if (evalc->parsed()) return execute("eval", g, [&](RunManifest& m) { run_eval(g, eo, m); });
  if (fitc->parsed()) return execute("fit", g, [&](RunManifest& m) { run_fit(g, fo, m); });
  if (trackc->parsed()) return execute("track", g, [&](RunManifest& m) { run_track(g, tro, m); });
  if (ablatec->parsed()) return execute("ablate", g, [&](RunManifest& m) { run_ablate(g, ao, m); });
  if (comparec->parsed()) return execute("compare-fit", g, [&](RunManifest& m) { run_compare(g, co, m); });
  if (reportc->parsed()) return execute("report", g, [&](RunManifest& m) { run_report(g, ro, m); });
  return 2;
}
