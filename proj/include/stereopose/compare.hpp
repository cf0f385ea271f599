#pragma once

#include <string>
#include <vector>

#include "stereopose/fitter.hpp"
#include "stereopose/transformer.hpp"

namespace stereopose {

struct MethodSummary {
  std::string method;
  std::size_t count = 0;   // poses produced
  double error_mm = 0.0;   // mean MPVPE against ground truth
  double seconds = 0.0;    // wall clock spent producing the poses
  double poses_per_sec() const { return seconds > 0.0 ? static_cast<double>(count) / seconds : 0.0; }
};

/// Network inference over the sequence, one batched forward pass per frame.
MethodSummary transformer_on_sequence(const TransformerParams& params, const Sequence& sequence,
                                      const std::vector<InstrumentModel>& models, const CameraRig& rig);

/// fit_sequence over the same detections; `fits` receives the per-frame results when given.
MethodSummary fitting_on_sequence(const Sequence& sequence, const std::vector<InstrumentModel>& models,
                                  const CameraRig& rig, const FitConfig& config,
                                  std::vector<FrameFit>* fits = nullptr);

}  // namespace stereopose
