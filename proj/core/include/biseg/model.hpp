#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "biseg/bayes_head.hpp"
#include "biseg/roi_head.hpp"
#include "biseg/score_maps.hpp"
#include "biseg/tensor.hpp"
#include "biseg/variant.hpp"

namespace biseg {

struct ModelConfig {
  int num_classes = 3;  // object categories C; maps carry C+1 channels
  int k1 = 7;           // partitions of the stride-16 set
  int k2 = 9;           // partitions of the stride-8 set
  int width8 = 32;      // backbone channels up to stride 8
  int width16 = 64;     // backbone channels at stride 16
  bool semantic_head = true;
  bool second_set = true;
  bool prior_product = true;  // multiply the inside likelihood by the semantic prior
  int roi_res1 = 20;          // assembled resolution of set 1; set 2 and masks use 2x

  int num_categories() const { return num_classes + 1; }
  bool operator==(const ModelConfig&) const = default;
};

ModelConfig model_config_for(const VariantSpec& variant, int num_classes, int k1, int k2, int width8,
                             int width16, int roi_res1);

HeadOptions head_options_for(const ModelConfig& config);

// Named parameter tensors in a fixed order. The same layout holds gradients.
struct ModelParams {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  // Glorot-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero biases.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);

  ModelParams zeros_like() const;
  bool has(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  std::size_t parameter_count() const;
};

// Intermediate tensors needed for the backward pass.
struct ForwardState {
  Tensor image;
  std::vector<Tensor> pre;   // conv outputs before ReLU, one per backbone layer
  std::vector<Tensor> post;  // after ReLU
  std::optional<SemanticHeadOutput> sem;
  ScoreMapSet set1;                 // stride 16, k1
  std::optional<ScoreMapSet> set2;  // stride 8, k2

  const Tensor& feat8() const;
  const Tensor& feat16() const;
};

// Upstream gradients on the three head outputs. Empty-shaped tensors are zero.
struct HeadGrads {
  Tensor sem_scores;
  Tensor set1_maps;
  Tensor set2_maps;
};

inline constexpr int kFeatureStride8 = 8;
inline constexpr int kFeatureStride16 = 16;

// Image [3, H, W] with H and W multiples of 16.
ForwardState backbone_forward(const Tensor& image, const ModelParams& params);

ModelParams backbone_backward(const ForwardState& state, const ModelParams& params, const HeadGrads& grads);

// Number of backbone_forward calls since process start.
std::uint64_t backbone_forward_count();

// Directory of <name>.ten files plus manifest.json with names, shapes and config.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace biseg
