#pragma once

#include <vector>

#include "biseg/bayes_head.hpp"
#include "biseg/label_map.hpp"

namespace biseg {

inline constexpr double kMaskProbClamp = 1e-7;

template <typename T>
struct TensorLoss {
  double value = 0;
  BasicTensor<T> grad;
};

template <typename T>
struct VectorLoss {
  double value = 0;
  std::vector<T> grad;
};

// Mean per-pixel multinomial cross-entropy of the semantic head against a
// class map of the same spatial size. Gradient is w.r.t. the logits.
template <typename T>
TensorLoss<T> loss_ss(const BasicSemanticHeadOutput<T>& sem, const LabelMap& gt);

// -log class_scores[label], evaluated as a log-softmax of the logits.
// Gradient is w.r.t. class_logits.
template <typename T>
VectorLoss<T> loss_cls(const BasicRoiScores<T>& scores, int label);

// Mean binary cross-entropy of a foreground probability map against a {0,1}
// mask; probabilities are clamped to [1e-7, 1 - 1e-7]. Gradient is w.r.t. the
// probabilities.
template <typename T>
TensorLoss<T> loss_mask(const BasicTensor<T>& fg_prob, const BasicTensor<T>& gt_mask);

}  // namespace biseg
