#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biseg/pipeline.hpp"
#include "biseg/synth_data.hpp"
#include "biseg/trainer.hpp"

namespace biseg {

// Everything a command can be configured with. Layers: defaults, then a JSON
// file, then command-line flags.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int threads = 1;
  int train_images = 200;
  int test_images = 100;
  SynthConfig synth;
  TrainConfig train;
  InferenceConfig infer;
  std::vector<double> eval_ious = {0.5, 0.7};
  std::vector<std::pair<int, int>> sweep_pairs = {{7, 7}, {7, 9}, {7, 11}};

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

// Overlays the keys present in `text` onto `cfg`. Unknown keys and type
// mismatches throw ConfigError naming the field and `source`.
void apply_config_json(ExperimentConfig& cfg, std::string_view text, const std::string& source);
ExperimentConfig load_config(const std::filesystem::path& path);

// Full effective config, stable key order.
std::string config_json(const ExperimentConfig& cfg);

// Synth config alone, as stored in dataset manifests.
std::string synth_config_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(std::string_view text, const std::string& source);

// "0.5,0.7" -> {0.5, 0.7}
std::vector<double> parse_double_list(std::string_view text, const std::string& what);
// "7,9" -> {7, 9}
std::pair<int, int> parse_int_pair(std::string_view text, const std::string& what);

}  // namespace biseg
