#include "biseg/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "biseg/bayes_head.hpp"

namespace biseg {

Tensor crop_instance_mask(const LabelMap& mask, const Roi& roi, int resolution) {
  const CropPlan plan = plan_crop(Shape{1, mask.height, mask.width}, roi, 1, resolution);
  Tensor out({resolution, resolution});
  for (std::size_t i = 0; i < plan.src.size(); ++i) out[i] = mask.labels[plan.src[i]] ? 1.0f : 0.0f;
  return out;
}

std::vector<LabeledRoi> sample_rois(const std::vector<Roi>& proposals, const std::vector<Instance>& gt,
                                    const RoiSamplingSpec& spec, Rng& rng) {
  if (proposals.empty()) throw DataError("sample_rois: no proposals");
  std::vector<std::size_t> keep(proposals.size());
  std::iota(keep.begin(), keep.end(), 0);
  const std::size_t n = std::min<std::size_t>(keep.size(), static_cast<std::size_t>(std::max(0, spec.rois_per_image)));
  if (n < keep.size()) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.below(keep.size() - i);
      std::swap(keep[i], keep[j]);
    }
    keep.resize(n);
    std::sort(keep.begin(), keep.end());
  }
  std::vector<LabeledRoi> out;
  out.reserve(keep.size());
  for (std::size_t idx : keep) {
    LabeledRoi lr;
    lr.roi = proposals[idx];
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double iou = box_iou(lr.roi, gt[g].box);
      if (iou > best) {
        best = iou;
        best_gt = static_cast<int>(g);
      }
    }
    lr.iou = best;
    if (best_gt >= 0 && best >= spec.positive_iou_threshold) {
      lr.label = gt[best_gt].category;
      lr.gt_index = best_gt;
      lr.gt_mask = crop_instance_mask(gt[best_gt].mask, lr.roi, spec.mask_resolution);
    }
    out.push_back(std::move(lr));
  }
  return out;
}

}  // namespace biseg
