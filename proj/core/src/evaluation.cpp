#include "biseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>

namespace biseg {

double region_iou(const LabelMap& a, const LabelMap& b) {
  require_same_dims(a, b, "region_iou");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool pa = a.labels[i] != 0;
    const bool pb = b.labels[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double average_precision(const std::vector<ApDetection>& dets, int num_gt, double iou_thresh) {
  if (num_gt <= 0) return 0.0;
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = dets[a];
    const auto& db = dets[b];
    if (da.score != db.score) return da.score > db.score;
    if (da.image != db.image) return da.image < db.image;
    return da.index < db.index;
  });

  std::map<int, std::vector<bool>> matched;
  std::vector<double> precision;
  std::vector<double> recall;
  int tp = 0;
  int fp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const ApDetection& d = dets[order[r]];
    auto& used = matched[d.image];
    if (used.size() < d.ious.size()) used.resize(d.ious.size(), false);
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < d.ious.size(); ++g) {
      if (!used[g] && d.ious[g] > best_iou) {
        best_iou = d.ious[g];
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_thresh) {
      used[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / num_gt);
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0;
  double prev_recall = 0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt) {
  require_same_dims(pred, gt, "semantic_metrics");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.labels[i];
    const int p = pred.labels[i];
    if (g >= categories || p >= categories) {
      throw DataError("semantic_metrics: category id " + std::to_string(std::max(g, p)) + " out of range [0," +
                      std::to_string(categories - 1) + "]");
    }
    ++at(g, p);
  }
}

SemanticMetrics semantic_metrics(const ConfusionMatrix& cm) {
  SemanticMetrics m;
  int present = 0;
  for (int c = 0; c < cm.categories; ++c) {
    long long gt_c = 0;
    long long pred_c = 0;
    for (int o = 0; o < cm.categories; ++o) {
      gt_c += cm.at(c, o);
      pred_c += cm.at(o, c);
    }
    if (gt_c == 0) continue;
    const long long tp = cm.at(c, c);
    ++present;
    m.mean_accuracy += static_cast<double>(tp) / static_cast<double>(gt_c);
    m.mean_iu += static_cast<double>(tp) / static_cast<double>(gt_c + pred_c - tp);
  }
  if (present > 0) {
    m.mean_accuracy /= present;
    m.mean_iu /= present;
  }
  return m;
}

SemanticMetrics semantic_metrics(const LabelMap& pred, const LabelMap& gt, int categories) {
  ConfusionMatrix cm(categories);
  cm.accumulate(pred, gt);
  return semantic_metrics(cm);
}

EvalResult evaluate(const std::vector<DatasetSample>& gt, const std::vector<std::vector<InstanceMask>>& pred,
                    const std::vector<std::optional<LabelMap>>& class_maps, int num_classes,
                    const std::vector<double>& thresholds) {
  if (pred.size() != gt.size()) {
    throw DataError("evaluate: " + std::to_string(pred.size()) + " prediction sets for " +
                    std::to_string(gt.size()) + " images");
  }
  EvalResult r;
  r.num_classes = num_classes;
  r.thresholds = thresholds;
  r.gt_count.assign(static_cast<std::size_t>(num_classes), 0);
  r.det_count.assign(static_cast<std::size_t>(num_classes), 0);

  std::vector<std::vector<ApDetection>> per_cat(static_cast<std::size_t>(num_classes));
  for (std::size_t img = 0; img < gt.size(); ++img) {
    std::vector<std::vector<const Instance*>> gts(static_cast<std::size_t>(num_classes));
    for (const auto& inst : gt[img].instances) {
      if (inst.category < 1 || inst.category > num_classes) {
        throw DataError("evaluate: image " + gt[img].id + " has gt category " + std::to_string(inst.category));
      }
      gts[static_cast<std::size_t>(inst.category - 1)].push_back(&inst);
      ++r.gt_count[static_cast<std::size_t>(inst.category - 1)];
    }
    for (std::size_t d = 0; d < pred[img].size(); ++d) {
      const InstanceMask& p = pred[img][d];
      if (p.category < 1 || p.category > num_classes) {
        throw DataError("evaluate: image " + gt[img].id + " has detection category " + std::to_string(p.category));
      }
      const auto c = static_cast<std::size_t>(p.category - 1);
      ApDetection a;
      a.image = static_cast<int>(img);
      a.index = static_cast<int>(d);
      a.score = p.score;
      for (const Instance* g : gts[c]) a.ious.push_back(region_iou(p.mask, g->mask));
      per_cat[c].push_back(std::move(a));
      ++r.det_count[c];
    }
  }

  for (double t : thresholds) {
    std::vector<double> aps;
    double sum = 0;
    int n = 0;
    for (int c = 0; c < num_classes; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      if (r.gt_count[ci] == 0) {
        aps.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const double ap = average_precision(per_cat[ci], r.gt_count[ci], t);
      aps.push_back(ap);
      sum += ap;
      ++n;
    }
    r.ap.push_back(std::move(aps));
    r.mapr.push_back(n > 0 ? sum / n : 0.0);
  }

  bool any_maps = false;
  ConfusionMatrix cm(num_classes + 1);
  for (std::size_t img = 0; img < gt.size() && img < class_maps.size(); ++img) {
    if (!class_maps[img]) continue;
    any_maps = true;
    cm.accumulate(*class_maps[img], gt[img].class_map);
  }
  if (any_maps) r.semantic = semantic_metrics(cm);
  return r;
}

std::string eval_result_json(const EvalResult& r, const std::string& method) {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["num_classes"] = r.num_classes;
  j["thresholds"] = r.thresholds;
  j["mapr"] = r.mapr;
  nlohmann::ordered_json ap = nlohmann::ordered_json::array();
  for (const auto& row : r.ap) {
    nlohmann::ordered_json jr = nlohmann::ordered_json::array();
    for (double v : row) {
      if (std::isnan(v)) {
        jr.push_back(nullptr);
      } else {
        jr.push_back(v);
      }
    }
    ap.push_back(jr);
  }
  j["ap_per_category"] = ap;
  j["gt_count"] = r.gt_count;
  j["det_count"] = r.det_count;
  if (r.semantic) {
    j["mean_accuracy"] = r.semantic->mean_accuracy;
    j["mean_iu"] = r.semantic->mean_iu;
  } else {
    j["mean_accuracy"] = nullptr;
    j["mean_iu"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string eval_table(const EvalResult& r, const std::string& method) {
  std::string head = "method";
  std::string row = method;
  char buf[64];
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof buf, " | mAP^r@%.1f", r.thresholds[i]);
    head += buf;
    std::snprintf(buf, sizeof buf, " | %.1f", 100.0 * r.mapr[i]);
    row += buf;
  }
  if (r.semantic) {
    head += " | mean acc | mean IU";
    std::snprintf(buf, sizeof buf, " | %.1f | %.1f", 100.0 * r.semantic->mean_accuracy, 100.0 * r.semantic->mean_iu);
    row += buf;
  }
  return head + "\n" + row + "\n";
}

}  // namespace biseg
