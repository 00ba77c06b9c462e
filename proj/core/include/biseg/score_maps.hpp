#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "biseg/tensor.hpp"

namespace biseg {

// Axis-aligned box in image pixels; x1 > x0 and y1 > y0.
struct Roi {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  float objectness = 0;

  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
  float area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0f; }
  bool operator==(const Roi&) const = default;
};

// Continuous box in feature-map coordinates.
struct FeatureBox {
  double x0, y0, x1, y1;
};

FeatureBox project_roi(const Roi& roi, int stride);

// Intersection with [0,width] x [0,height]; nullopt when nothing is left.
std::optional<Roi> clip_roi(const Roi& roi, int width, int height);

// True when the box spans at least one feature pixel per axis at `stride`.
bool spans_feature_pixel(const Roi& roi, int stride);

double box_iou(const Roi& a, const Roi& b);

// 2*k*k*(C+1) position-sensitive maps. Channel = (cell * 2 + side) * (C+1) + category,
// with cell row-major over the k x k grid and side 0 = outside, 1 = inside.
template <typename T>
struct BasicScoreMapSet {
  BasicTensor<T> maps;
  int k = 1;
  int stride = 16;
  int num_categories = 1;  // C+1, background included

  static int channels_for(int k, int num_categories) { return 2 * k * k * num_categories; }
  int channel(int cell, int side, int category) const { return (cell * 2 + side) * num_categories + category; }
  // Throws ShapeError when maps do not have exactly channels_for(k, C+1) channels.
  void validate() const;
};

template <typename T>
struct BasicRoiLikelihood {
  BasicTensor<T> inside;   // [C+1, M, M]
  BasicTensor<T> outside;  // [C+1, M, M]

  int resolution() const { return inside.dim(1); }
  int num_categories() const { return inside.dim(0); }
};

using ScoreMapSet = BasicScoreMapSet<float>;
using RoiLikelihood = BasicRoiLikelihood<float>;

// Flat source index into the score maps for every assembled element. Forward
// gathers through it, backward scatters through it.
struct AssemblyPlan {
  int resolution = 0;
  int num_categories = 0;
  std::vector<std::uint32_t> inside_src;
  std::vector<std::uint32_t> outside_src;
};

// Output pixel (r, c) uses partition cell (floor(r*k/M), floor(c*k/M)) and the
// nearest feature pixel to relative position ((r+0.5)/M, (c+0.5)/M) of the
// projected box.
AssemblyPlan plan_assembly(const Shape& maps_shape, int k, int stride, int num_categories,
                           const Roi& roi, int resolution);

template <typename T>
BasicRoiLikelihood<T> gather_likelihood(const BasicTensor<T>& maps, const AssemblyPlan& plan);

template <typename T>
void scatter_likelihood_grad(BasicTensor<T>& grad_maps, const AssemblyPlan& plan,
                             const BasicRoiLikelihood<T>& grad);

template <typename T>
BasicRoiLikelihood<T> assemble(const BasicScoreMapSet<T>& set, const Roi& roi, int resolution);

// upsample_x2(coarse) + fine, for both the inside and the outside stack.
template <typename T>
BasicRoiLikelihood<T> fuse(const BasicRoiLikelihood<T>& coarse, const BasicRoiLikelihood<T>& fine);

// Returns (grad_coarse, grad_fine).
template <typename T>
std::pair<BasicRoiLikelihood<T>, BasicRoiLikelihood<T>> fuse_backward(
    const BasicRoiLikelihood<T>& grad, int coarse_resolution);

template <typename T>
BasicRoiLikelihood<T> upsample_likelihood(const BasicRoiLikelihood<T>& lik);

}  // namespace biseg
