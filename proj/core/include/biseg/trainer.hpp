#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biseg/losses.hpp"
#include "biseg/model.hpp"
#include "biseg/proposals.hpp"
#include "biseg/roi_head.hpp"
#include "biseg/sampling.hpp"
#include "biseg/synth_data.hpp"
#include "biseg/variant.hpp"

namespace biseg {

struct LrStage {
  int iterations = 0;
  double rate = 0;
  bool operator==(const LrStage&) const = default;
};

struct TrainConfig {
  std::string variant = "biseg-fused";
  int num_classes = 3;
  int k1 = 7;
  int k2 = 9;
  int roi_res1 = 20;
  int roi_res2 = 40;
  int width8 = 32;
  int width16 = 64;
  int rois_per_image = 16;
  int proposals_per_image = 64;
  std::vector<LrStage> lr_schedule = {{2000, 0.05}, {1000, 0.005}};
  std::uint64_t seed = 0;
  double positive_iou_threshold = 0.5;
  double weight_ss = 1.0;
  double weight_cls = 1.0;
  double weight_mask = 1.0;
  JitterSpec jitter;

  void validate() const;
  int total_iterations() const;
  // Learning rate for 0-based iteration `it`.
  double rate_at(int it) const;
  // Stages rescaled to `iterations` total, keeping their proportions.
  std::vector<LrStage> scaled_schedule(int iterations) const;

  VariantSpec variant_spec() const;
  ModelConfig model_config() const;
  HeadOptions head_options() const;
  RoiSamplingSpec sampling_spec() const;

  bool operator==(const TrainConfig&) const = default;
};

struct LossBreakdown {
  double ss = 0;
  double cls = 0;
  double mask = 0;
  double total = 0;
  int rois = 0;
  int positives = 0;
  int skipped_rois = 0;
};

struct TrainLogRow {
  int iteration = 0;
  double lr = 0;
  LossBreakdown loss;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRow> log;
  long skipped_rois = 0;
};

// Semantic ground truth at the head's stride: the label at each cell center.
LabelMap downsample_class_map(const LabelMap& full, int stride);

// Losses and parameter gradients for one image. Draws proposals and the ROI
// subset from `rng`.
struct StepOutput {
  LossBreakdown loss;
  ModelParams grads;
};
StepOutput compute_step(const ModelParams& params, const DatasetSample& sample, const TrainConfig& cfg, Rng& rng);

// Same as compute_step with explicit, already labelled ROIs.
StepOutput compute_step_with_rois(const ModelParams& params, const DatasetSample& sample, const TrainConfig& cfg,
                                  const std::vector<LabeledRoi>& rois);

void sgd_update(ModelParams& params, const ModelParams& grads, double lr);

// Image-centric SGD: one image per iteration, images visited in a per-epoch
// permutation. Throws NumericalError naming the iteration if the loss or a
// parameter becomes non-finite.
TrainResult train_toy(const std::vector<DatasetSample>& dataset, const TrainConfig& cfg);

// "iteration,lr,loss_ss,loss_cls,loss_mask,total"
std::string train_log_csv(const std::vector<TrainLogRow>& log);

}  // namespace biseg
