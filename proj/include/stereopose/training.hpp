#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stereopose/metrics.hpp"
#include "stereopose/transformer.hpp"

namespace stereopose {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch = 256;
  int epochs = 30;
  std::uint64_t seed = 0;
  /// Samples per gradient work unit. Part of the arithmetic, so part of the result.
  std::size_t chunk = 32;

  void validate() const;
};

struct StepLog {
  int epoch = 0;  // 1-based
  std::size_t step = 0;
  LossTerms mean;  // per-sample mean over the batch
};

struct TrainResult {
  TransformerParams params;
  std::vector<StepLog> steps;
  std::vector<LossTerms> epoch_means;  // per-sample mean over each epoch
};

using StepCallback = std::function<void(const StepLog&)>;

/// Adam on the mean batch loss. Batch gradients are summed per chunk (chunks in
/// parallel) and the chunk sums are reduced in chunk order, so the result does
/// not depend on the thread count. Throws NonFiniteLoss with epoch/step context.
TrainResult train(std::span<const DatasetRecord> records, const std::vector<InstrumentModel>& models,
                  const CameraRig& rig, const ModelConfig& model, const TrainConfig& config,
                  const StepCallback& on_step = {});

/// CSV: epoch,step,loss,pose,vertex,kp3d
void write_loss_log(std::ostream& out, std::span<const StepLog> steps);

/// Network predictions paired with ground truth, in record order.
std::vector<PosePair> predict_pairs(const TransformerParams& params, std::span<const DatasetRecord> records,
                                    const CameraRig& rig);

/// Mean over records of the surface-point error of the decoded pose.
MetricReport evaluate_mpvpe(const TransformerParams& params, std::span<const DatasetRecord> records,
                            const std::vector<InstrumentModel>& models, const CameraRig& rig);

struct AblationConfig {
  std::string name;
  ModelConfig model;
};

/// mono, stereo, stereo + keypoint one-hot, and that plus the 6D rotation output, in that order.
std::vector<AblationConfig> ablation_configs(int class_count);

struct AblationRow {
  std::string name;
  ModelConfig model;
  double mpvpe = 0.0;
  double final_loss = 0.0;
  double seconds = 0.0;
};

/// Trains every config on `train_set` with the same TrainConfig and scores it on `eval_set`.
std::vector<AblationRow> run_ablation(std::span<const AblationConfig> configs, std::span<const DatasetRecord> train_set,
                                      std::span<const DatasetRecord> eval_set,
                                      const std::vector<InstrumentModel>& models, const CameraRig& rig,
                                      const TrainConfig& config);

}  // namespace stereopose
