#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace biseg {

// Ablation variants. Flags:
//   use_semantic_head  train and run the semantic branch
//   use_prior_product  posterior inside = prior * likelihood inside
//   use_fusion         add the stride-8 score-map set and fuse it with set 1
struct VariantSpec {
  std::string name;
  bool use_prior_product = false;
  bool use_semantic_head = false;
  bool use_fusion = false;

  bool operator==(const VariantSpec&) const = default;
};

// Throws ConfigError for names other than fcis-star, naive-multitask,
// biseg-single, biseg-fused.
VariantSpec variant_by_name(std::string_view name);
const std::vector<VariantSpec>& all_variants();

}  // namespace biseg
