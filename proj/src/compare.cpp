#include "stereopose/compare.hpp"

#include <chrono>
#include <map>
#include <utility>

#include "stereopose/metrics.hpp"

namespace stereopose {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

MethodSummary transformer_on_sequence(const TransformerParams& params, const Sequence& sequence,
                                      const std::vector<InstrumentModel>& models, const CameraRig& rig) {
  MethodSummary s{"transformer"};
  std::vector<StereoObservation> obs;
  double error_sum = 0.0;
  for (const auto& frame : sequence.frames) {
    if (frame.empty()) continue;
    obs.clear();
    for (const auto& det : frame) obs.push_back(det.record.observation);
    const auto start = Clock::now();
    const auto preds = predict(params, obs, rig);
    std::vector<Pose7D> poses;
    poses.reserve(preds.size());
    for (const auto& p : preds) poses.push_back(p.pose());
    s.seconds += seconds_since(start);
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const auto& rec = frame[i].record;
      error_sum += mpvpe(poses[i], rec.pose, model_for_class(models, rec.class_id));
    }
    s.count += frame.size();
  }
  if (s.count > 0) s.error_mm = error_sum / static_cast<double>(s.count);
  return s;
}

MethodSummary fitting_on_sequence(const Sequence& sequence, const std::vector<InstrumentModel>& models,
                                  const CameraRig& rig, const FitConfig& config, std::vector<FrameFit>* fits) {
  MethodSummary s{"optimization"};
  auto result = fit_sequence(sequence, models, rig, config);

  std::map<std::pair<int, int>, const DatasetRecord*> gt;
  for (const auto& frame : sequence.frames)
    for (const auto& det : frame) gt[{det.frame, det.track_gt_id}] = &det.record;

  double error_sum = 0.0;
  for (const auto& f : result) {
    const DatasetRecord& rec = *gt.at({f.frame, f.track_id});
    error_sum += mpvpe(f.fit.pose, rec.pose, model_for_class(models, rec.class_id));
    s.seconds += f.millis / 1000.0;
  }
  s.count = result.size();
  if (s.count > 0) s.error_mm = error_sum / static_cast<double>(s.count);
  if (fits) *fits = std::move(result);
  return s;
}

}  // namespace stereopose
