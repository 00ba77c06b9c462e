#pragma once

#include <optional>
#include <vector>

#include "biseg/rng.hpp"
#include "biseg/score_maps.hpp"
#include "biseg/synth_data.hpp"

namespace biseg {

struct LabeledRoi {
  Roi roi;
  int label = 0;                 // 0 = negative / background
  std::optional<Tensor> gt_mask; // [M2, M2] in {0,1}, positives only
  int gt_index = -1;             // matched instance, -1 for negatives
  double iou = 0;                // best box IoU against ground truth
};

struct RoiSamplingSpec {
  int rois_per_image = 16;
  double positive_iou_threshold = 0.5;  // inclusive
  int mask_resolution = 40;
};

// Labels each proposal by its best box IoU (ties to the lowest ground-truth
// index), then keeps a uniform random subset of rois_per_image, in proposal order.
std::vector<LabeledRoi> sample_rois(const std::vector<Roi>& proposals, const std::vector<Instance>& gt,
                                    const RoiSamplingSpec& spec, Rng& rng);

// Instance mask under the box, resampled to M x M by nearest neighbour.
Tensor crop_instance_mask(const LabelMap& mask, const Roi& roi, int resolution);

}  // namespace biseg
