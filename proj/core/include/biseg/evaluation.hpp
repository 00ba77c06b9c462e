#pragma once

#include <optional>
#include <string>
#include <vector>

#include "biseg/label_map.hpp"
#include "biseg/postprocess.hpp"
#include "biseg/synth_data.hpp"

namespace biseg {

// |a & b| / |a | b| over nonzero pixels; 0 when both are empty.
double region_iou(const LabelMap& a, const LabelMap& b);

// One scored detection of a single category. ious[g] is its region IoU with
// ground-truth instance g of the same category in the same image.
struct ApDetection {
  int image = 0;
  int index = 0;
  double score = 0;
  std::vector<double> ious;
};

// Greedy matching in descending score order (ties by image, then index); each
// detection takes the unmatched gt with the highest IoU, lowest gt index on
// ties. All-point interpolated area under the precision envelope.
double average_precision(const std::vector<ApDetection>& dets, int num_gt, double iou_thresh);

// Square confusion matrix, rows = ground truth, columns = prediction.
struct ConfusionMatrix {
  int categories = 0;
  std::vector<long long> counts;

  explicit ConfusionMatrix(int n = 0) : categories(n), counts(static_cast<std::size_t>(n) * n, 0) {}
  long long& at(int gt, int pred) { return counts[static_cast<std::size_t>(gt) * categories + pred]; }
  long long at(int gt, int pred) const { return counts[static_cast<std::size_t>(gt) * categories + pred]; }

  // Throws DataError for ids >= categories, ShapeError on size mismatch.
  void accumulate(const LabelMap& pred, const LabelMap& gt);
};

struct SemanticMetrics {
  double mean_accuracy = 0;
  double mean_iu = 0;
};

// Averages over categories that appear in the ground truth.
SemanticMetrics semantic_metrics(const ConfusionMatrix& cm);
SemanticMetrics semantic_metrics(const LabelMap& pred, const LabelMap& gt, int categories);

struct EvalResult {
  int num_classes = 0;
  std::vector<double> thresholds;
  std::vector<std::vector<double>> ap;  // [threshold][category - 1]; NaN when the category has no gt
  std::vector<double> mapr;             // [threshold]
  std::vector<int> gt_count;            // [category - 1]
  std::vector<int> det_count;           // [category - 1]
  std::optional<SemanticMetrics> semantic;
};

// Instance predictions and optional class maps per image, aligned with `gt`.
EvalResult evaluate(const std::vector<DatasetSample>& gt, const std::vector<std::vector<InstanceMask>>& pred,
                    const std::vector<std::optional<LabelMap>>& class_maps, int num_classes,
                    const std::vector<double>& thresholds);

std::string eval_result_json(const EvalResult& r, const std::string& method);
// "method | mAP^r@0.5 | mAP^r@0.7" with percentages to one decimal.
std::string eval_table(const EvalResult& r, const std::string& method);

}  // namespace biseg
