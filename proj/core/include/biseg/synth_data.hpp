#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biseg/label_map.hpp"
#include "biseg/score_maps.hpp"
#include "biseg/tensor.hpp"

namespace biseg {

enum class ShapeKind : int { kDisk = 1, kSquare = 2, kTriangle = 3 };
inline constexpr int kSynthNumClasses = 3;

struct Instance {
  int ordinal = 0;   // 1-based draw order, the value stored in the instance PGM
  int category = 0;  // 1..C
  LabelMap mask;     // visible pixels, {0,1}
  Roi box;           // tight bounds of the mask in pixel-edge coordinates
};

struct DatasetSample {
  std::string id;
  Tensor image;  // [3, H, W] in [0, 1], quantized to 8 bits
  std::vector<Instance> instances;
  LabelMap class_map;  // category of the topmost instance, 0 elsewhere
};

struct SynthConfig {
  int height = 64;
  int width = 64;
  int min_instances = 1;
  int max_instances = 4;
  bool occlusion = true;
  int min_size = 16;
  int max_size = 30;
  // Probability that a new shape is placed next to an existing one.
  double cluster_prob = 0.45;
  // Half-width of the uniform per-instance color jitter around the category color.
  double color_jitter = 0.22;
  // Half-width of the uniform per-pixel noise on objects and background.
  double pixel_noise = 0.08;
  int min_visible_pixels = 16;

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

// Sample `index` of the dataset drawn from `seed`; independent of other indices.
DatasetSample generate_sample(std::uint64_t seed, int index, const SynthConfig& cfg);
std::vector<DatasetSample> generate_samples(std::uint64_t seed, int count, const SynthConfig& cfg);

// Rebuilds the class map from instance masks in draw order (later draws on top).
LabelMap class_map_from_instances(const std::vector<Instance>& instances, int height, int width);

// Tight box of a binary mask; nullopt for an empty mask.
std::optional<Roi> mask_bounds(const LabelMap& mask);

}  // namespace biseg
