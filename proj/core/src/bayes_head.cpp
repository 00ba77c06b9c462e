#include "biseg/bayes_head.hpp"

#include <algorithm>
#include <cmath>

#include "biseg/ops.hpp"

namespace biseg {

CropPlan plan_crop(const Shape& map_shape, const Roi& roi, int stride, int resolution) {
  require_ndim(map_shape, 3, "crop");
  if (resolution < 1) throw ShapeError("crop: resolution must be >= 1");
  const FeatureBox f = project_roi(roi, stride);
  if (!(f.x1 > f.x0) || !(f.y1 > f.y0)) throw ShapeError("crop: ROI has no positive area");
  const int c = map_shape[0];
  const int h = map_shape[1];
  const int w = map_shape[2];
  const int m = resolution;
  std::vector<int> ys(static_cast<std::size_t>(m)), xs(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    ys[i] = std::clamp(static_cast<int>(std::floor(f.y0 + (i + 0.5) / m * (f.y1 - f.y0))), 0, h - 1);
    xs[i] = std::clamp(static_cast<int>(std::floor(f.x0 + (i + 0.5) / m * (f.x1 - f.x0))), 0, w - 1);
  }
  CropPlan plan{c, m, {}};
  plan.src.resize(static_cast<std::size_t>(c) * m * m);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    for (int r = 0; r < m; ++r) {
      for (int col = 0; col < m; ++col) {
        plan.src[(static_cast<std::size_t>(ch) * m + r) * m + col] =
            static_cast<std::uint32_t>(ch * plane + static_cast<std::size_t>(ys[r]) * w + xs[col]);
      }
    }
  }
  return plan;
}

template <typename T>
BasicTensor<T> apply_crop(const BasicTensor<T>& map, const CropPlan& plan) {
  BasicTensor<T> out({plan.channels, plan.resolution, plan.resolution});
  for (std::size_t i = 0; i < plan.src.size(); ++i) out[i] = map[plan.src[i]];
  return out;
}

template <typename T>
void scatter_crop_grad(BasicTensor<T>& grad_map, const CropPlan& plan, const BasicTensor<T>& grad) {
  require_same_shape(grad.shape(), Shape{plan.channels, plan.resolution, plan.resolution}, "crop backward");
  for (std::size_t i = 0; i < plan.src.size(); ++i) grad_map[plan.src[i]] += grad[i];
}

template <typename T>
BasicTensor<T> crop_prior(const BasicSemanticHeadOutput<T>& sem, const Roi& roi, int resolution) {
  return apply_crop(sem.probs, plan_crop(sem.probs.shape(), roi, sem.stride, resolution));
}

template <typename T>
BasicRoiPosterior<T> bayes_combine(const BasicTensor<T>& prior, const BasicRoiLikelihood<T>& lik) {
  require_same_shape(prior.shape(), lik.inside.shape(), "bayes_combine prior vs inside likelihood");
  require_same_shape(lik.outside.shape(), lik.inside.shape(), "bayes_combine outside vs inside likelihood");
  return {multiply(prior, lik.inside), lik.outside};
}

template <typename T>
BayesCombineGrads<T> bayes_combine_backward(const BasicTensor<T>& prior, const BasicRoiLikelihood<T>& lik,
                                            const BasicRoiPosterior<T>& grad) {
  require_same_shape(grad.inside.shape(), prior.shape(), "bayes_combine backward");
  return {multiply(grad.inside, lik.inside), {multiply(grad.inside, prior), grad.outside}};
}

namespace {

double sigmoid(double d) {
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

}  // namespace

template <typename T>
BasicRoiScores<T> mask_and_score(const BasicRoiPosterior<T>& post) {
  require_same_shape(post.inside.shape(), post.outside.shape(), "mask_and_score");
  require_ndim(post.inside.shape(), 3, "mask_and_score");
  const int cats = post.inside.dim(0);
  const std::size_t hw = static_cast<std::size_t>(post.inside.dim(1)) * post.inside.dim(2);
  BasicRoiScores<T> out;
  out.fg_prob = BasicTensor<T>(post.inside.shape());
  out.class_logits.resize(static_cast<std::size_t>(cats));
  for (int c = 0; c < cats; ++c) {
    double sum = 0.0;
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = c * hw + p;
      const double in = post.inside[i];
      const double ou = post.outside[i];
      out.fg_prob[i] = static_cast<T>(sigmoid(in - ou));
      sum += in >= ou ? in : ou;
    }
    out.class_logits[c] = static_cast<T>(sum / static_cast<double>(hw));
  }
  out.class_scores = softmax_vector<T>(out.class_logits);
  return out;
}

template <typename T>
BasicRoiPosterior<T> mask_and_score_backward(const BasicRoiPosterior<T>& post, const BasicRoiScores<T>& out,
                                             const BasicRoiScoresGrad<T>& grad) {
  const int cats = post.inside.dim(0);
  const std::size_t hw = static_cast<std::size_t>(post.inside.dim(1)) * post.inside.dim(2);
  std::vector<double> g_logits(static_cast<std::size_t>(cats), 0.0);
  if (!grad.class_logits.empty()) {
    if (grad.class_logits.size() != g_logits.size()) throw ShapeError("mask_and_score backward: class_logits size");
    for (int c = 0; c < cats; ++c) g_logits[c] += grad.class_logits[c];
  }
  if (!grad.class_scores.empty()) {
    if (grad.class_scores.size() != g_logits.size()) throw ShapeError("mask_and_score backward: class_scores size");
    const auto g = softmax_vector_backward<T>(out.class_scores, grad.class_scores);
    for (int c = 0; c < cats; ++c) g_logits[c] += g[c];
  }
  const bool has_fg = grad.fg_prob.ndim() != 0;
  if (has_fg) require_same_shape(grad.fg_prob.shape(), post.inside.shape(), "mask_and_score backward fg_prob");

  BasicRoiPosterior<T> g{BasicTensor<T>(post.inside.shape()), BasicTensor<T>(post.inside.shape())};
  for (int c = 0; c < cats; ++c) {
    const double gm = g_logits[c] / static_cast<double>(hw);
    for (std::size_t p = 0; p < hw; ++p) {
      const std::size_t i = c * hw + p;
      const double in = post.inside[i];
      const double ou = post.outside[i];
      double gi = 0.0, go = 0.0;
      if (in >= ou) {
        gi += gm;
      } else {
        go += gm;
      }
      if (has_fg) {
        const double d = in - ou;
        const double ds = sigmoid(d) * sigmoid(-d);
        const double gf = static_cast<double>(grad.fg_prob[i]) * ds;
        gi += gf;
        go -= gf;
      }
      g.inside[i] = static_cast<T>(gi);
      g.outside[i] = static_cast<T>(go);
    }
  }
  return g;
}

template <typename T>
int argmax_category(const BasicRoiScores<T>& scores) {
  return static_cast<int>(std::max_element(scores.class_scores.begin(), scores.class_scores.end()) -
                          scores.class_scores.begin());
}

#define BISEG_INSTANTIATE_BAYES(T)                                                                    \
  template BasicTensor<T> apply_crop(const BasicTensor<T>&, const CropPlan&);                         \
  template void scatter_crop_grad(BasicTensor<T>&, const CropPlan&, const BasicTensor<T>&);           \
  template BasicTensor<T> crop_prior(const BasicSemanticHeadOutput<T>&, const Roi&, int);             \
  template BasicRoiPosterior<T> bayes_combine(const BasicTensor<T>&, const BasicRoiLikelihood<T>&);   \
  template BayesCombineGrads<T> bayes_combine_backward(const BasicTensor<T>&,                         \
                                                       const BasicRoiLikelihood<T>&,                  \
                                                       const BasicRoiPosterior<T>&);                  \
  template BasicRoiScores<T> mask_and_score(const BasicRoiPosterior<T>&);                             \
  template BasicRoiPosterior<T> mask_and_score_backward(                                              \
      const BasicRoiPosterior<T>&, const BasicRoiScores<T>&, const BasicRoiScoresGrad<T>&);           \
  template int argmax_category(const BasicRoiScores<T>&);

BISEG_INSTANTIATE_BAYES(float)
BISEG_INSTANTIATE_BAYES(double)

}  // namespace biseg
