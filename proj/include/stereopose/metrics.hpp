#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stereopose/geometry.hpp"
#include "stereopose/instruments.hpp"
#include "stereopose/kernels.hpp"

namespace stereopose {

/// Ground truth and prediction for one object.
struct PosePair {
  int class_id = 0;       // ground-truth class
  int pred_class = 0;     // predicted label
  Pose7D pred;
  Pose7D gt;
};

/// Mean surface-point distance between the two posed models. The same value
/// serves as MPVPE and as ADD on articulated instruments.
double mpvpe(const Pose7D& pred, const Pose7D& gt, const InstrumentModel& model);

/// Mean over corresponding surface points, articulation included.
double add(const Pose7D& pred, const Pose7D& gt, const InstrumentModel& model);
/// Mean over ground-truth points of the distance to the nearest predicted point.
double add_s(const Pose7D& pred, const Pose7D& gt, const InstrumentModel& model);

/// Class-checked forms; throw ClassMismatch when labels disagree with each other or the model.
double add(const PosePair& pair, const InstrumentModel& model);
double add_s(const PosePair& pair, const InstrumentModel& model);

struct ClassValue {
  int class_id = 0;
  std::size_t count = 0;
  double value = 0.0;
};

struct MetricReport {
  std::string metric;
  std::vector<ClassValue> per_class;  // populated classes, ascending id
  double aggregate = 0.0;             // count-weighted mean of per_class
  std::size_t count = 0;
  double threshold_fraction = 0.0;    // only for accuracy reports
  std::string model_set_digest;
};

/// Share of pairs with add_s < fraction * diameter, per class and overall.
MetricReport add_s_accuracy(std::span<const PosePair> pairs, const std::vector<InstrumentModel>& models,
                            double fraction = 0.10);
MetricReport mpvpe_report(std::span<const PosePair> pairs, const std::vector<InstrumentModel>& models);
MetricReport add_report(std::span<const PosePair> pairs, const std::vector<InstrumentModel>& models);

/// C x C, row r = ground truth r, normalized so populated rows sum to 1.
kernels::Matrix confusion_matrix(std::span<const int> pred_classes, std::span<const int> gt_classes, int class_count);

/// FNV-1a over the serialized model set; identifies the surface set a report used.
std::string model_set_digest(const std::vector<InstrumentModel>& models);

}  // namespace stereopose
