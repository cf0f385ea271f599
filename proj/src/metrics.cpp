#include "stereopose/metrics.hpp"

#include <cstdio>
#include <map>
#include <sstream>

namespace stereopose {

namespace {

void check_classes(const PosePair& pair, const InstrumentModel& model) {
  if (pair.pred_class != pair.class_id || model.class_id != pair.class_id)
    throw ClassMismatch("prediction class " + std::to_string(pair.pred_class) + ", ground truth " +
                        std::to_string(pair.class_id) + ", model " + std::to_string(model.class_id));
}

template <typename F>
MetricReport per_class_report(std::string metric, std::span<const PosePair> pairs,
                              const std::vector<InstrumentModel>& models, F&& value) {
  if (pairs.empty()) throw EmptyInput(metric + " needs at least one pose pair");
  std::vector<double> values(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) values[i] = value(pairs[i], model_for_class(models, pairs[i].class_id));
  std::map<int, ClassValue> by_class;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ClassValue& cv = by_class[pairs[i].class_id];
    cv.class_id = pairs[i].class_id;
    ++cv.count;
    cv.value += values[i];
  }
  MetricReport report;
  report.metric = std::move(metric);
  report.count = pairs.size();
  double weighted = 0.0;
  for (auto& [id, cv] : by_class) {
    weighted += cv.value;
    cv.value /= static_cast<double>(cv.count);
    report.per_class.push_back(cv);
  }
  report.aggregate = weighted / static_cast<double>(pairs.size());
  report.model_set_digest = model_set_digest(models);
  return report;
}

}  // namespace

double mpvpe(const Pose7D& pred, const Pose7D& gt, const InstrumentModel& model) {
  const auto a = apply_pose(pred, model, PointSet::Surface);
  const auto b = apply_pose(gt, model, PointSet::Surface);
  return kernels::parallel::mean_paired_distance(a, b);
}

double add(const Pose7D& pred, const Pose7D& gt, const InstrumentModel& model) { return mpvpe(pred, gt, model); }

double add_s(const Pose7D& pred, const Pose7D& gt, const InstrumentModel& model) {
  const auto p = apply_pose(pred, model, PointSet::Surface);
  const auto g = apply_pose(gt, model, PointSet::Surface);
  return kernels::parallel::mean_nearest_distance(g, p);
}

double add(const PosePair& pair, const InstrumentModel& model) {
  check_classes(pair, model);
  return add(pair.pred, pair.gt, model);
}

double add_s(const PosePair& pair, const InstrumentModel& model) {
  check_classes(pair, model);
  return add_s(pair.pred, pair.gt, model);
}

MetricReport add_s_accuracy(std::span<const PosePair> pairs, const std::vector<InstrumentModel>& models,
                            double fraction) {
  if (!(fraction > 0.0)) throw InvalidArgument("accuracy fraction must be > 0");
  MetricReport r = per_class_report("add_s_accuracy", pairs, models, [&](const PosePair& p, const InstrumentModel& m) {
    return add_s(p.pred, p.gt, m) < fraction * m.diameter ? 1.0 : 0.0;
  });
  r.threshold_fraction = fraction;
  return r;
}

MetricReport mpvpe_report(std::span<const PosePair> pairs, const std::vector<InstrumentModel>& models) {
  return per_class_report("mpvpe_mm", pairs, models,
                          [](const PosePair& p, const InstrumentModel& m) { return mpvpe(p.pred, p.gt, m); });
}

MetricReport add_report(std::span<const PosePair> pairs, const std::vector<InstrumentModel>& models) {
  return per_class_report("add_mm", pairs, models,
                          [](const PosePair& p, const InstrumentModel& m) { return add(p, m); });
}

kernels::Matrix confusion_matrix(std::span<const int> pred_classes, std::span<const int> gt_classes, int class_count) {
  if (pred_classes.size() != gt_classes.size())
    throw LengthMismatch(std::to_string(pred_classes.size()) + " predictions for " + std::to_string(gt_classes.size()) +
                         " labels");
  if (class_count < 1) throw InvalidArgument("class_count must be >= 1");
  kernels::Matrix m(class_count, class_count);
  for (std::size_t i = 0; i < gt_classes.size(); ++i) {
    const int g = gt_classes[i], p = pred_classes[i];
    if (g < 0 || g >= class_count || p < 0 || p >= class_count)
      throw ClassOutOfRange("class label outside [0, " + std::to_string(class_count) + ")");
    m(g, p) += 1.0;
  }
  for (int r = 0; r < class_count; ++r) {
    double total = 0.0;
    for (int c = 0; c < class_count; ++c) total += m(r, c);
    if (total > 0.0)
      for (int c = 0; c < class_count; ++c) m(r, c) /= total;
  }
  return m;
}

std::string model_set_digest(const std::vector<InstrumentModel>& models) {
  std::ostringstream out;
  write_model_set(out, ModelSet{0, models});
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : out.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace stereopose
