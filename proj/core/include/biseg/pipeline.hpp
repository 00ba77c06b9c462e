#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "biseg/dataset.hpp"
#include "biseg/model.hpp"
#include "biseg/postprocess.hpp"
#include "biseg/proposals.hpp"

namespace biseg {

struct InferenceConfig {
  ProposalMode proposal_mode = ProposalMode::kJitterGt;
  int proposal_count = 64;
  JitterSpec jitter;
  double nms_iou = 0.3;
  double vote_iou = 0.5;
  double binarize_thresh = 0.5;
  double render_min_score = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const InferenceConfig&) const = default;
};

struct ImageResult {
  std::vector<InstanceMask> instances;
  std::vector<Detection> kept;        // after NMS
  std::optional<LabelMap> class_map;  // full resolution; absent without a semantic head
  int proposals_used = 0;
  int proposals_discarded = 0;        // clipped away or smaller than one stride-16 pixel
};

// One shared backbone pass, then per-ROI heads, background-argmax removal,
// per-category NMS and mask voting.
ImageResult run_image(const Tensor& image, const std::vector<Roi>& proposals, const ModelParams& params,
                      const InferenceConfig& cfg);

// Per-pixel argmax of the semantic probabilities, upsampled x`stride` by nearest neighbour.
LabelMap semantic_class_map(const SemanticHeadOutput& sem, int height, int width);

// Proposals for one dataset image according to cfg.proposal_mode. The jitter
// stream is derived from (cfg.seed, image_index).
std::vector<Roi> proposals_for(const DatasetSample& sample, int image_index, const InferenceConfig& cfg,
                               const ProposalTable* table);

// Runs every image; images are split over `threads` workers, results keep dataset order.
std::vector<ImageResult> run_dataset(const std::vector<DatasetSample>& samples, const ModelParams& params,
                                     const InferenceConfig& cfg, const ProposalTable* table, int threads);

// Runs f(i) for i in [0, n) on up to `threads` workers with a fixed contiguous split.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f);

}  // namespace biseg
