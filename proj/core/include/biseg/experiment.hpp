#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biseg/config.hpp"
#include "biseg/dataset.hpp"
#include "biseg/evaluation.hpp"
#include "biseg/grad_check.hpp"
#include "biseg/pipeline.hpp"
#include "biseg/trainer.hpp"

namespace biseg {

namespace fs = std::filesystem;

// `dir/<split>` when it holds a dataset, otherwise `dir` itself.
fs::path resolve_split(const fs::path& dir, const std::string& split);

// Per-image prediction files under a directory:
//   instances/<id>.pgm    16-bit, value = 1-based rank of the instance, 0 = background
//   detections/<id>.json  {"detections": [{"ordinal", "category", "score", "box"}]}
//   classes/<id>.pgm      8-bit semantic argmax (absent without a semantic head)
// Higher-ranked instances are painted on top where masks overlap.
void write_predictions(const fs::path& dir, const std::string& id, const ImageResult& result, int height, int width);

struct LoadedPrediction {
  std::vector<InstanceMask> instances;
  std::optional<LabelMap> class_map;
};
LoadedPrediction read_predictions(const fs::path& dir, const std::string& id, int height, int width);

// Writes <out>/train and <out>/test; each split draws from its own stream of cfg.seed.
void cmd_gen(const ExperimentConfig& cfg, const fs::path& out);

// Trains cfg.train on the train split; writes checkpoint/, train_log.csv and config.json.
TrainResult cmd_train(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out);

// Runs the pipeline over the test split with a checkpoint and writes prediction files.
// `proposal_csv` is required when cfg.infer.proposal_mode is file.
std::vector<ImageResult> cmd_infer(const ExperimentConfig& cfg, const fs::path& data, const fs::path& checkpoint,
                                   const fs::path& out, const std::optional<fs::path>& proposal_csv = std::nullopt);

// Reads prediction files, scores them against the test split and writes eval.json.
EvalResult cmd_eval(const ExperimentConfig& cfg, const fs::path& data, const fs::path& predictions,
                    const fs::path& out, const std::string& method);

GradCheckReport cmd_gradcheck(const std::string& scope, int trials, std::uint64_t seed, const fs::path& out);

struct SweepRow {
  int k1 = 0;
  int k2 = 0;
  double mapr05 = 0;
  double mapr07 = 0;
};

// Trains and evaluates biseg-fused per (k1, k2) in cfg.sweep_pairs; writes sweep.csv.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const fs::path& data, const fs::path& out);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// PPM overlays per test image: <id>.instances.ppm (instances with score above
// cfg.infer.render_min_score, colored by rank) and <id>.semantic.ppm (class colors).
void cmd_render(const ExperimentConfig& cfg, const fs::path& data, const fs::path& predictions, const fs::path& out);

// Train + in-memory inference + evaluation on one variant; used by sweep and the acceptance suite.
struct VariantRun {
  TrainResult train;
  std::vector<ImageResult> results;
  EvalResult eval;
};
VariantRun run_variant(const ExperimentConfig& cfg, const std::vector<DatasetSample>& train,
                       const std::vector<DatasetSample>& test);

}  // namespace biseg
