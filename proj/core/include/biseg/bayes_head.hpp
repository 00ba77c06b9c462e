#pragma once

#include <cstdint>
#include <vector>

#include "biseg/score_maps.hpp"
#include "biseg/tensor.hpp"

namespace biseg {

// Semantic segmentation branch output at stride 8.
template <typename T>
struct BasicSemanticHeadOutput {
  BasicTensor<T> scores;  // [C+1, Hs, Ws] logits
  BasicTensor<T> probs;   // softmax_channels(scores)
  int stride = 8;
};

// Posterior for one ROI: inside = prior * likelihood inside, outside = likelihood outside.
template <typename T>
struct BasicRoiPosterior {
  BasicTensor<T> inside;
  BasicTensor<T> outside;
};

template <typename T>
struct BasicRoiScores {
  BasicTensor<T> fg_prob;        // [C+1, M, M], per-category foreground probability
  std::vector<T> class_logits;   // mean over pixels of max(inside, outside)
  std::vector<T> class_scores;   // softmax(class_logits)
};

// Upstream gradients into mask_and_score. Empty members count as zero.
template <typename T>
struct BasicRoiScoresGrad {
  BasicTensor<T> fg_prob;
  std::vector<T> class_logits;
  std::vector<T> class_scores;
};

using SemanticHeadOutput = BasicSemanticHeadOutput<float>;
using RoiPosterior = BasicRoiPosterior<float>;
using RoiScores = BasicRoiScores<float>;
using RoiScoresGrad = BasicRoiScoresGrad<float>;

// Nearest-neighbour resampling of the part of a [C, H, W] map covered by a
// box (image pixels, projected by `stride`) onto an M x M grid with pixel-center
// sampling. One source index per output element.
struct CropPlan {
  int channels = 0;
  int resolution = 0;
  std::vector<std::uint32_t> src;
};

CropPlan plan_crop(const Shape& map_shape, const Roi& roi, int stride, int resolution);

template <typename T>
BasicTensor<T> apply_crop(const BasicTensor<T>& map, const CropPlan& plan);

template <typename T>
void scatter_crop_grad(BasicTensor<T>& grad_map, const CropPlan& plan, const BasicTensor<T>& grad);

// Crops the semantic *probabilities* under the ROI to [C+1, M, M].
template <typename T>
BasicTensor<T> crop_prior(const BasicSemanticHeadOutput<T>& sem, const Roi& roi, int resolution);

template <typename T>
BasicRoiPosterior<T> bayes_combine(const BasicTensor<T>& prior, const BasicRoiLikelihood<T>& lik);

template <typename T>
struct BayesCombineGrads {
  BasicTensor<T> prior;
  BasicRoiLikelihood<T> likelihood;
};

template <typename T>
BayesCombineGrads<T> bayes_combine_backward(const BasicTensor<T>& prior, const BasicRoiLikelihood<T>& lik,
                                            const BasicRoiPosterior<T>& grad);

// Posterior without a prior (variants that skip the product).
template <typename T>
BasicRoiPosterior<T> passthrough_posterior(const BasicRoiLikelihood<T>& lik) {
  return {lik.inside, lik.outside};
}

// Two-way softmax per pixel for the foreground probability; max(inside,
// outside) averaged over the ROI for the category logit; softmax over
// categories for the classification score.
template <typename T>
BasicRoiScores<T> mask_and_score(const BasicRoiPosterior<T>& post);

// The max routes gradient to inside on exact ties.
template <typename T>
BasicRoiPosterior<T> mask_and_score_backward(const BasicRoiPosterior<T>& post, const BasicRoiScores<T>& out,
                                             const BasicRoiScoresGrad<T>& grad);

// Index of the highest class score; lowest index wins ties.
template <typename T>
int argmax_category(const BasicRoiScores<T>& scores);

}  // namespace biseg
