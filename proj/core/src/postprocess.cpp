#include "biseg/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace biseg {

std::vector<std::size_t> nms_indices(const std::vector<Detection>& dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (dets[k].category == dets[i].category && box_iou(dets[k].box, dets[i].box) > iou_thresh) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thresh) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(dets, iou_thresh)) out.push_back(dets[i]);
  return out;
}

Tensor paste_mask(const Tensor& mask, const Roi& box, int height, int width, Tensor* coverage) {
  require_ndim(mask.shape(), 2, "paste_mask");
  const int m = mask.dim(0);
  const int mw = mask.dim(1);
  Tensor out({height, width});
  if (coverage) *coverage = Tensor({height, width});
  const double bw = box.width();
  const double bh = box.height();
  if (!(bw > 0) || !(bh > 0)) return out;
  for (int y = 0; y < height; ++y) {
    const double cy = y + 0.5;
    if (cy < box.y0 || cy >= box.y1) continue;
    const int my = std::clamp(static_cast<int>(std::floor((cy - box.y0) / bh * m)), 0, m - 1);
    for (int x = 0; x < width; ++x) {
      const double cx = x + 0.5;
      if (cx < box.x0 || cx >= box.x1) continue;
      const int mx = std::clamp(static_cast<int>(std::floor((cx - box.x0) / bw * mw)), 0, mw - 1);
      out.at(y, x) = mask.at(my, mx);
      if (coverage) coverage->at(y, x) = 1.0f;
    }
  }
  return out;
}

Tensor vote_probability(const Detection& kept, const std::vector<Detection>& all, double vote_iou, int height,
                        int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> num(n, 0.0), den(n, 0.0);
  auto add = [&](const Detection& d) {
    Tensor cov;
    const Tensor pasted = paste_mask(d.mask, d.box, height, width, &cov);
    for (std::size_t i = 0; i < n; ++i) {
      if (cov[i] == 0.0f) continue;
      num[i] += static_cast<double>(d.score) * pasted[i];
      den[i] += d.score;
    }
  };
  for (const Detection& d : all) {
    if (d.category == kept.category && box_iou(d.box, kept.box) >= vote_iou) add(d);
  }
  Tensor out({height, width});
  for (std::size_t i = 0; i < n; ++i) out[i] = den[i] > 0 ? static_cast<float>(num[i] / den[i]) : 0.0f;
  return out;
}

std::vector<InstanceMask> mask_vote(const std::vector<Detection>& kept, const std::vector<Detection>& all,
                                    double vote_iou, double binarize_thresh, int height, int width) {
  std::vector<InstanceMask> out;
  for (const Detection& k : kept) {
    const Tensor prob = vote_probability(k, all, vote_iou, height, width);
    InstanceMask im;
    im.category = k.category;
    im.score = k.score;
    im.box = k.box;
    im.mask = LabelMap(height, width);
    std::size_t fg = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
      if (prob[i] >= binarize_thresh) {
        im.mask.labels[i] = 1;
        ++fg;
      }
    }
    if (fg > 0) out.push_back(std::move(im));
  }
  return out;
}

}  // namespace biseg
