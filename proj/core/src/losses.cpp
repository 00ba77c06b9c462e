#include "biseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace biseg {

template <typename T>
TensorLoss<T> loss_ss(const BasicSemanticHeadOutput<T>& sem, const LabelMap& gt) {
  require_ndim(sem.scores.shape(), 3, "loss_ss");
  const int cats = sem.scores.dim(0);
  if (gt.height != sem.scores.dim(1) || gt.width != sem.scores.dim(2)) {
    throw ShapeError("loss_ss: class map " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                     " does not match semantic scores " + shape_string(sem.scores.shape()));
  }
  const std::size_t hw = gt.size();
  TensorLoss<T> out{0.0, BasicTensor<T>(sem.scores.shape())};
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(hw);
  for (std::size_t p = 0; p < hw; ++p) {
    const int label = gt.labels[p];
    if (label >= cats) {
      throw DataError("loss_ss: class id " + std::to_string(label) + " out of range [0," +
                      std::to_string(cats - 1) + "]");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < cats; ++c) mx = std::max(mx, static_cast<double>(sem.scores[c * hw + p]));
    double sum = 0.0;
    for (int c = 0; c < cats; ++c) sum += std::exp(static_cast<double>(sem.scores[c * hw + p]) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(sem.scores[label * hw + p]);
    for (int c = 0; c < cats; ++c) {
      const double prob = std::exp(static_cast<double>(sem.scores[c * hw + p]) - lse);
      out.grad[c * hw + p] = static_cast<T>((prob - (c == label ? 1.0 : 0.0)) * inv_n);
    }
  }
  out.value = total * inv_n;
  return out;
}

template <typename T>
VectorLoss<T> loss_cls(const BasicRoiScores<T>& scores, int label) {
  const int cats = static_cast<int>(scores.class_logits.size());
  if (label < 0 || label >= cats) {
    throw DataError("loss_cls: label " + std::to_string(label) + " out of range");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : scores.class_logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (T v : scores.class_logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  VectorLoss<T> out;
  out.value = lse - static_cast<double>(scores.class_logits[label]);
  out.grad.resize(static_cast<std::size_t>(cats));
  for (int c = 0; c < cats; ++c) {
    const double p = std::exp(static_cast<double>(scores.class_logits[c]) - lse);
    out.grad[c] = static_cast<T>(p - (c == label ? 1.0 : 0.0));
  }
  return out;
}

template <typename T>
TensorLoss<T> loss_mask(const BasicTensor<T>& fg_prob, const BasicTensor<T>& gt_mask) {
  require_same_shape(fg_prob.shape(), gt_mask.shape(), "loss_mask");
  TensorLoss<T> out{0.0, BasicTensor<T>(fg_prob.shape())};
  const double inv_n = 1.0 / static_cast<double>(fg_prob.size());
  double total = 0.0;
  for (std::size_t i = 0; i < fg_prob.size(); ++i) {
    const double p = std::clamp(static_cast<double>(fg_prob[i]), kMaskProbClamp, 1.0 - kMaskProbClamp);
    const double y = gt_mask[i];
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    out.grad[i] = static_cast<T>((p - y) / (p * (1.0 - p)) * inv_n);
  }
  out.value = total * inv_n;
  return out;
}

#define BISEG_INSTANTIATE_LOSSES(T)                                                   \
  template TensorLoss<T> loss_ss(const BasicSemanticHeadOutput<T>&, const LabelMap&); \
  template VectorLoss<T> loss_cls(const BasicRoiScores<T>&, int);                     \
  template TensorLoss<T> loss_mask(const BasicTensor<T>&, const BasicTensor<T>&);

BISEG_INSTANTIATE_LOSSES(float)
BISEG_INSTANTIATE_LOSSES(double)

}  // namespace biseg
