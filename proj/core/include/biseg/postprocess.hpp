#pragma once

#include <vector>

#include "biseg/label_map.hpp"
#include "biseg/score_maps.hpp"
#include "biseg/tensor.hpp"

namespace biseg {

struct Detection {
  int category = 0;  // 1..C
  float score = 0;   // class_scores[category]
  Roi box;
  Tensor mask;       // [M2, M2] foreground probability for `category`
};

struct InstanceMask {
  int category = 0;
  float score = 0;
  Roi box;
  LabelMap mask;  // {0,1}, image size, at least one foreground pixel
};

// Greedy per-category NMS: visit by descending score (ties to the lower input
// index) and drop boxes whose IoU with a kept box of the same category exceeds
// iou_thresh. Returns indices into `dets` in visiting order.
std::vector<std::size_t> nms_indices(const std::vector<Detection>& dets, double iou_thresh);
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh);

// Nearest-neighbour paste of an M x M mask over its box; 0 outside the box.
// `coverage` (same size) is set to 1 for pixels inside the box.
Tensor paste_mask(const Tensor& mask, const Roi& box, int height, int width, Tensor* coverage = nullptr);

// Score-weighted per-pixel average over same-category detections with box
// IoU >= vote_iou (the kept one included); weights renormalize over the
// contributors whose box covers the pixel. Uncovered pixels are 0.
Tensor vote_probability(const Detection& kept, const std::vector<Detection>& all, double vote_iou, int height,
                        int width);

// vote_probability binarized at >= binarize_thresh; empty results are dropped.
std::vector<InstanceMask> mask_vote(const std::vector<Detection>& kept, const std::vector<Detection>& all,
                                    double vote_iou, double binarize_thresh, int height, int width);

}  // namespace biseg
