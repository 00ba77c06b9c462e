#include "biseg/score_maps.hpp"

#include <algorithm>
#include <cmath>

#include "biseg/ops.hpp"

namespace biseg {

FeatureBox project_roi(const Roi& roi, int stride) {
  const double s = stride;
  return {roi.x0 / s, roi.y0 / s, roi.x1 / s, roi.y1 / s};
}

std::optional<Roi> clip_roi(const Roi& roi, int width, int height) {
  Roi out = roi;
  out.x0 = std::clamp(roi.x0, 0.0f, static_cast<float>(width));
  out.x1 = std::clamp(roi.x1, 0.0f, static_cast<float>(width));
  out.y0 = std::clamp(roi.y0, 0.0f, static_cast<float>(height));
  out.y1 = std::clamp(roi.y1, 0.0f, static_cast<float>(height));
  if (!(out.x1 > out.x0) || !(out.y1 > out.y0)) return std::nullopt;
  return out;
}

bool spans_feature_pixel(const Roi& roi, int stride) {
  const FeatureBox f = project_roi(roi, stride);
  return f.x1 - f.x0 >= 1.0 && f.y1 - f.y0 >= 1.0;
}

double box_iou(const Roi& a, const Roi& b) {
  const double ix = std::max(0.0, static_cast<double>(std::min(a.x1, b.x1)) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, static_cast<double>(std::min(a.y1, b.y1)) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

template <typename T>
void BasicScoreMapSet<T>::validate() const {
  require_ndim(maps.shape(), 3, "score map set");
  if (k < 1) throw ShapeError("score map set: k must be >= 1");
  const int want = channels_for(k, num_categories);
  if (maps.dim(0) != want) {
    throw ShapeError("score map set: dimension 0 has " + std::to_string(maps.dim(0)) +
                     " channels, expected 2*k^2*(C+1) = " + std::to_string(want) + " for k=" +
                     std::to_string(k) + ", C+1=" + std::to_string(num_categories));
  }
}

namespace {

// Nearest feature index for relative sample positions (i + 0.5) / m over [lo, hi).
std::vector<int> nearest_samples(double lo, double hi, int m, int limit) {
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double coord = lo + (i + 0.5) / m * (hi - lo);
    idx[i] = std::clamp(static_cast<int>(std::floor(coord)), 0, limit - 1);
  }
  return idx;
}

}  // namespace

AssemblyPlan plan_assembly(const Shape& maps_shape, int k, int stride, int num_categories,
                           const Roi& roi, int resolution) {
  require_ndim(maps_shape, 3, "assemble");
  if (resolution < k) {
    throw ShapeError("assemble: resolution " + std::to_string(resolution) + " is smaller than k=" +
                     std::to_string(k));
  }
  if (maps_shape[0] != BasicScoreMapSet<float>::channels_for(k, num_categories)) {
    throw ShapeError("assemble: score maps have " + std::to_string(maps_shape[0]) +
                     " channels, expected " +
                     std::to_string(BasicScoreMapSet<float>::channels_for(k, num_categories)));
  }
  const FeatureBox f = project_roi(roi, stride);
  if (!(f.x1 > f.x0) || !(f.y1 > f.y0)) throw ShapeError("assemble: ROI has no positive area");
  const int hf = maps_shape[1];
  const int wf = maps_shape[2];
  const int m = resolution;
  const auto ys = nearest_samples(f.y0, f.y1, m, hf);
  const auto xs = nearest_samples(f.x0, f.x1, m, wf);
  std::vector<int> cell(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) cell[i] = i * k / m;

  AssemblyPlan plan;
  plan.resolution = m;
  plan.num_categories = num_categories;
  const std::size_t n = static_cast<std::size_t>(num_categories) * m * m;
  plan.inside_src.resize(n);
  plan.outside_src.resize(n);
  const std::size_t plane = static_cast<std::size_t>(hf) * wf;
  for (int cat = 0; cat < num_categories; ++cat) {
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c) {
        const int cell_index = cell[r] * k + cell[c];
        const std::size_t pix = static_cast<std::size_t>(ys[r]) * wf + xs[c];
        const std::size_t out = (static_cast<std::size_t>(cat) * m + r) * m + c;
        const std::size_t ch_out = static_cast<std::size_t>((cell_index * 2 + 0) * num_categories + cat);
        const std::size_t ch_in = static_cast<std::size_t>((cell_index * 2 + 1) * num_categories + cat);
        plan.outside_src[out] = static_cast<std::uint32_t>(ch_out * plane + pix);
        plan.inside_src[out] = static_cast<std::uint32_t>(ch_in * plane + pix);
      }
    }
  }
  return plan;
}

template <typename T>
BasicRoiLikelihood<T> gather_likelihood(const BasicTensor<T>& maps, const AssemblyPlan& plan) {
  const Shape shape{plan.num_categories, plan.resolution, plan.resolution};
  BasicRoiLikelihood<T> out{BasicTensor<T>(shape), BasicTensor<T>(shape)};
  for (std::size_t i = 0; i < plan.inside_src.size(); ++i) {
    out.inside[i] = maps[plan.inside_src[i]];
    out.outside[i] = maps[plan.outside_src[i]];
  }
  return out;
}

template <typename T>
void scatter_likelihood_grad(BasicTensor<T>& grad_maps, const AssemblyPlan& plan,
                             const BasicRoiLikelihood<T>& grad) {
  const Shape shape{plan.num_categories, plan.resolution, plan.resolution};
  require_same_shape(grad.inside.shape(), shape, "assemble backward (inside)");
  require_same_shape(grad.outside.shape(), shape, "assemble backward (outside)");
  for (std::size_t i = 0; i < plan.inside_src.size(); ++i) {
    grad_maps[plan.inside_src[i]] += grad.inside[i];
    grad_maps[plan.outside_src[i]] += grad.outside[i];
  }
}

template <typename T>
BasicRoiLikelihood<T> assemble(const BasicScoreMapSet<T>& set, const Roi& roi, int resolution) {
  set.validate();
  const AssemblyPlan plan = plan_assembly(set.maps.shape(), set.k, set.stride, set.num_categories, roi, resolution);
  return gather_likelihood(set.maps, plan);
}

template <typename T>
BasicRoiLikelihood<T> upsample_likelihood(const BasicRoiLikelihood<T>& lik) {
  return {upsample_x2(lik.inside), upsample_x2(lik.outside)};
}

template <typename T>
BasicRoiLikelihood<T> fuse(const BasicRoiLikelihood<T>& coarse, const BasicRoiLikelihood<T>& fine) {
  require_same_shape(coarse.inside.shape(), coarse.outside.shape(), "fuse coarse inside/outside");
  require_same_shape(fine.inside.shape(), fine.outside.shape(), "fuse fine inside/outside");
  if (fine.resolution() != 2 * coarse.resolution()) {
    throw ShapeError("fuse: fine resolution " + std::to_string(fine.resolution()) +
                     " is not twice the coarse resolution " + std::to_string(coarse.resolution()));
  }
  BasicRoiLikelihood<T> out = upsample_likelihood(coarse);
  add_inplace(out.inside, fine.inside);
  add_inplace(out.outside, fine.outside);
  return out;
}

template <typename T>
std::pair<BasicRoiLikelihood<T>, BasicRoiLikelihood<T>> fuse_backward(const BasicRoiLikelihood<T>& grad,
                                                                       int coarse_resolution) {
  const Shape coarse_shape{grad.num_categories(), coarse_resolution, coarse_resolution};
  BasicRoiLikelihood<T> g_coarse{upsample_x2_backward(grad.inside, coarse_shape),
                                 upsample_x2_backward(grad.outside, coarse_shape)};
  return {std::move(g_coarse), grad};
}

#define BISEG_INSTANTIATE_SCORE_MAPS(T)                                                          \
  template struct BasicScoreMapSet<T>;                                                           \
  template BasicRoiLikelihood<T> gather_likelihood(const BasicTensor<T>&, const AssemblyPlan&);  \
  template void scatter_likelihood_grad(BasicTensor<T>&, const AssemblyPlan&,                    \
                                        const BasicRoiLikelihood<T>&);                           \
  template BasicRoiLikelihood<T> assemble(const BasicScoreMapSet<T>&, const Roi&, int);          \
  template BasicRoiLikelihood<T> upsample_likelihood(const BasicRoiLikelihood<T>&);              \
  template BasicRoiLikelihood<T> fuse(const BasicRoiLikelihood<T>&, const BasicRoiLikelihood<T>&); \
  template std::pair<BasicRoiLikelihood<T>, BasicRoiLikelihood<T>> fuse_backward(                \
      const BasicRoiLikelihood<T>&, int);

BISEG_INSTANTIATE_SCORE_MAPS(float)
BISEG_INSTANTIATE_SCORE_MAPS(double)

}  // namespace biseg
