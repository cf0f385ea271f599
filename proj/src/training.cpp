#include "stereopose/training.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>

#include "stereopose/dataset_io.hpp"
#include "stereopose/rng.hpp"

namespace stereopose {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

LossTerms scaled(LossTerms t, double s) {
  t.total *= s;
  t.pose *= s;
  t.vertex *= s;
  t.kp3d *= s;
  return t;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("Adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
  if (batch < 1 || chunk < 1) throw InvalidArgument("batch and chunk must be >= 1");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
}

TrainResult train(std::span<const DatasetRecord> records, const std::vector<InstrumentModel>& models,
                  const CameraRig& rig, const ModelConfig& model, const TrainConfig& config,
                  const StepCallback& on_step) {
  config.validate();
  model.validate();
  if (records.empty()) throw EmptyInput("training needs at least one record");
  if (static_cast<int>(models.size()) < model.class_count)
    throw InvalidArgument("model set has fewer classes than the network config");

  TrainResult result;
  result.params = init_params(model, config.seed);
  TransformerParams& params = result.params;
  const std::size_t n_params = params.values.size();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0), grad(n_params);

  const std::size_t max_chunks = (config.batch + config.chunk - 1) / config.chunk;
  std::vector<std::vector<double>> chunk_grads(max_chunks, std::vector<double>(n_params));
  std::vector<LossTerms> chunk_terms(max_chunks);
  std::vector<std::exception_ptr> chunk_errors(max_chunks);

  std::size_t t = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled(records.size(), config.seed, epoch);
    LossTerms epoch_sum;
    std::size_t step = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch, ++step) {
      const std::size_t bsize = std::min(config.batch, order.size() - start);
      std::vector<const DatasetRecord*> batch(bsize);
      for (std::size_t i = 0; i < bsize; ++i) batch[i] = &records[order[start + i]];
      const std::size_t n_chunks = (bsize + config.chunk - 1) / config.chunk;

#pragma omp parallel for schedule(dynamic, 1)
      for (std::size_t c = 0; c < n_chunks; ++c) {
        try {
          auto& g = chunk_grads[c];
          std::fill(g.begin(), g.end(), 0.0);
          const std::size_t lo = c * config.chunk, hi = std::min(bsize, lo + config.chunk);
          chunk_terms[c] = batch_loss(params, std::span(batch).subspan(lo, hi - lo), models, rig, g);
          chunk_errors[c] = nullptr;
        } catch (...) {
          chunk_errors[c] = std::current_exception();
        }
      }
      for (std::size_t c = 0; c < n_chunks; ++c)
        if (chunk_errors[c]) std::rethrow_exception(chunk_errors[c]);

      LossTerms sum;
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t c = 0; c < n_chunks; ++c) {
        sum += chunk_terms[c];
        const auto& g = chunk_grads[c];
        for (std::size_t i = 0; i < n_params; ++i) grad[i] += g[i];
      }
      const double inv = 1.0 / static_cast<double>(bsize);
      if (!std::isfinite(sum.total))
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));

      ++t;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
      double* w = params.values.data();
#pragma omp parallel for schedule(static)
      for (std::size_t i = 0; i < n_params; ++i) {
        const double g = grad[i] * inv;
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        w[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
      }

      StepLog log{epoch, step, scaled(sum, inv)};
      result.steps.push_back(log);
      epoch_sum += sum;
      if (on_step) on_step(log);
    }
    result.epoch_means.push_back(scaled(epoch_sum, 1.0 / static_cast<double>(records.size())));
  }
  if (!all_finite(params)) throw NonFiniteLoss("parameters became non-finite during training");
  return result;
}

void write_loss_log(std::ostream& out, std::span<const StepLog> steps) {
  out << "epoch,step,loss,pose,vertex,kp3d\n";
  for (const auto& s : steps)
    out << s.epoch << ',' << s.step << ',' << format_number(s.mean.total) << ',' << format_number(s.mean.pose) << ','
        << format_number(s.mean.vertex) << ',' << format_number(s.mean.kp3d) << '\n';
}

std::vector<PosePair> predict_pairs(const TransformerParams& params, std::span<const DatasetRecord> records,
                                    const CameraRig& rig) {
  constexpr std::size_t kBlock = 256;
  std::vector<PosePair> pairs;
  pairs.reserve(records.size());
  std::vector<StereoObservation> obs;
  for (std::size_t start = 0; start < records.size(); start += kBlock) {
    const std::size_t end = std::min(records.size(), start + kBlock);
    obs.clear();
    for (std::size_t i = start; i < end; ++i) obs.push_back(records[i].observation);
    const auto preds = predict(params, obs, rig);
    for (std::size_t i = start; i < end; ++i) {
      PosePair p;
      p.class_id = records[i].class_id;
      p.pred_class = records[i].observation.class_id;
      p.pred = preds[i - start].pose();
      p.gt = records[i].pose;
      pairs.push_back(p);
    }
  }
  return pairs;
}

MetricReport evaluate_mpvpe(const TransformerParams& params, std::span<const DatasetRecord> records,
                            const std::vector<InstrumentModel>& models, const CameraRig& rig) {
  const auto pairs = predict_pairs(params, records, rig);
  return mpvpe_report(pairs, models);
}

std::vector<AblationConfig> ablation_configs(int class_count) {
  ModelConfig base;
  base.class_count = class_count;
  base.keypoint_onehot = false;
  base.rotation_mode = RotationMode::AxisAngle3;

  std::vector<AblationConfig> out;
  base.modality = Modality::Mono;
  out.push_back({"mono", base});
  base.modality = Modality::Stereo;
  out.push_back({"stereo", base});
  base.keypoint_onehot = true;
  out.push_back({"stereo+kp-onehot", base});
  base.rotation_mode = RotationMode::SixD;
  out.push_back({"stereo+kp-onehot+6d", base});
  return out;
}

std::vector<AblationRow> run_ablation(std::span<const AblationConfig> configs, std::span<const DatasetRecord> train_set,
                                      std::span<const DatasetRecord> eval_set,
                                      const std::vector<InstrumentModel>& models, const CameraRig& rig,
                                      const TrainConfig& config) {
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    const auto start = std::chrono::steady_clock::now();
    const TrainResult r = train(train_set, models, rig, c.model, config);
    AblationRow row;
    row.name = c.name;
    row.model = c.model;
    row.mpvpe = evaluate_mpvpe(r.params, eval_set, models, rig).aggregate;
    row.final_loss = r.epoch_means.back().total;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace stereopose
