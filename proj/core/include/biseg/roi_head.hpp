#pragma once

#include "biseg/bayes_head.hpp"
#include "biseg/score_maps.hpp"

namespace biseg {

// Per-ROI head: assemble set 1 (and set 2), fuse to the fine resolution,
// optionally multiply by the cropped semantic prior, then mask_and_score.
// Without a second set the coarse likelihood is upsampled x2 alone, which is
// fuse() with an all-zero fine term.
struct HeadOptions {
  bool use_prior = true;
  bool use_fusion = true;
  int coarse_resolution = 20;  // M1, stride-16 set
  int fine_resolution = 40;    // M2 = 2 * M1

  void validate() const;
};

template <typename T>
struct RoiHeadInputs {
  const BasicScoreMapSet<T>* set1 = nullptr;
  const BasicScoreMapSet<T>* set2 = nullptr;           // required when use_fusion
  const BasicSemanticHeadOutput<T>* sem = nullptr;     // required when use_prior
};

template <typename T>
struct RoiHeadTrace {
  AssemblyPlan plan1;
  AssemblyPlan plan2;
  CropPlan prior_plan;
  BasicRoiLikelihood<T> likelihood;  // fused, at fine resolution
  BasicTensor<T> prior;
  BasicRoiPosterior<T> posterior;
  BasicRoiScores<T> scores;
};

// Gradient accumulators shaped like the inputs. Members for absent inputs stay untouched.
template <typename T>
struct RoiHeadGradSink {
  BasicTensor<T> set1_maps;
  BasicTensor<T> set2_maps;
  BasicTensor<T> sem_probs;
};

template <typename T>
RoiHeadTrace<T> roi_head_forward(const RoiHeadInputs<T>& in, const Roi& roi, const HeadOptions& opts);

template <typename T>
void roi_head_backward(const RoiHeadTrace<T>& trace, const HeadOptions& opts, const BasicRoiScoresGrad<T>& grad,
                       RoiHeadGradSink<T>& sink);

}  // namespace biseg
