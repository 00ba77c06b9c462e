#include "biseg/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "biseg/ops.hpp"

namespace biseg {

void TrainConfig::validate() const {
  variant_spec();
  if (num_classes < 1) throw ConfigError("train.num_classes must be >= 1");
  if (k1 < 1 || k2 < 1) throw ConfigError("train.k1 and train.k2 must be >= 1");
  if (roi_res2 != 2 * roi_res1) throw ConfigError("train.roi_res2 must equal 2 * train.roi_res1");
  if (roi_res1 < k1) throw ConfigError("train.roi_res1 must be >= k1");
  if (roi_res2 < k2) throw ConfigError("train.roi_res2 must be >= k2");
  if (!(positive_iou_threshold > 0 && positive_iou_threshold < 1)) {
    throw ConfigError("train.positive_iou_threshold must be in (0,1)");
  }
  if (rois_per_image < 1) throw ConfigError("train.rois_per_image must be >= 1");
  if (proposals_per_image < 1) throw ConfigError("train.proposals_per_image must be >= 1");
  if (lr_schedule.empty()) throw ConfigError("train.lr_schedule must not be empty");
  for (const auto& s : lr_schedule) {
    if (s.iterations < 0 || s.rate < 0 || !std::isfinite(s.rate)) throw ConfigError("train.lr_schedule has a bad stage");
  }
  if (weight_ss < 0 || weight_cls < 0 || weight_mask < 0) throw ConfigError("train loss weights must be >= 0");
}

int TrainConfig::total_iterations() const {
  int n = 0;
  for (const auto& s : lr_schedule) n += s.iterations;
  return n;
}

double TrainConfig::rate_at(int it) const {
  for (const auto& s : lr_schedule) {
    if (it < s.iterations) return s.rate;
    it -= s.iterations;
  }
  return lr_schedule.back().rate;
}

std::vector<LrStage> TrainConfig::scaled_schedule(int iterations) const {
  const int total = total_iterations();
  std::vector<LrStage> out = lr_schedule;
  if (total <= 0) {
    out.back().iterations = iterations;
    return out;
  }
  int assigned = 0;
  for (std::size_t i = 0; i + 1 < out.size(); ++i) {
    out[i].iterations = static_cast<int>(std::llround(static_cast<double>(lr_schedule[i].iterations) * iterations / total));
    assigned += out[i].iterations;
  }
  out.back().iterations = std::max(0, iterations - assigned);
  return out;
}

VariantSpec TrainConfig::variant_spec() const { return variant_by_name(variant); }

ModelConfig TrainConfig::model_config() const {
  return model_config_for(variant_spec(), num_classes, k1, k2, width8, width16, roi_res1);
}

HeadOptions TrainConfig::head_options() const { return head_options_for(model_config()); }

RoiSamplingSpec TrainConfig::sampling_spec() const {
  return RoiSamplingSpec{rois_per_image, positive_iou_threshold, roi_res2};
}

LabelMap downsample_class_map(const LabelMap& full, int stride) {
  LabelMap out(full.height / stride, full.width / stride);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(y, x) = full.at(y * stride + stride / 2, x * stride + stride / 2);
  }
  return out;
}

StepOutput compute_step_with_rois(const ModelParams& params, const DatasetSample& sample, const TrainConfig& cfg,
                                  const std::vector<LabeledRoi>& rois) {
  const HeadOptions opts = cfg.head_options();
  const ForwardState st = backbone_forward(sample.image, params);
  StepOutput out;
  HeadGrads hg;

  if (st.sem) {
    const auto ss = loss_ss(*st.sem, downsample_class_map(sample.class_map, st.sem->stride));
    out.loss.ss = ss.value;
    hg.sem_scores = ss.grad;
    for (auto& g : hg.sem_scores.data()) g = static_cast<float>(g * cfg.weight_ss);
  }

  RoiHeadInputs<float> in{&st.set1, st.set2 ? &*st.set2 : nullptr, st.sem ? &*st.sem : nullptr};
  RoiHeadGradSink<float> sink{Tensor(st.set1.maps.shape()),
                              st.set2 ? Tensor(st.set2->maps.shape()) : Tensor(),
                              st.sem ? Tensor(st.sem->probs.shape()) : Tensor()};
  const int n_rois = static_cast<int>(rois.size());
  int n_pos = 0;
  for (const auto& r : rois) n_pos += r.label > 0;
  out.loss.rois = n_rois;
  out.loss.positives = n_pos;

  double cls_sum = 0.0, mask_sum = 0.0;
  for (const auto& r : rois) {
    const auto trace = roi_head_forward(in, r.roi, opts);
    RoiScoresGrad grad;
    const auto lc = loss_cls(trace.scores, r.label);
    cls_sum += lc.value;
    grad.class_logits.resize(lc.grad.size());
    for (std::size_t c = 0; c < lc.grad.size(); ++c) {
      grad.class_logits[c] = static_cast<float>(lc.grad[c] * cfg.weight_cls / n_rois);
    }
    if (r.label > 0) {
      const int m = opts.fine_resolution;
      Tensor fg({m, m});
      std::copy_n(trace.scores.fg_prob.plane(r.label), fg.size(), fg.data().begin());
      const auto lm = loss_mask(fg, *r.gt_mask);
      mask_sum += lm.value;
      grad.fg_prob = Tensor(trace.scores.fg_prob.shape());
      float* dst = grad.fg_prob.plane(r.label);
      for (std::size_t i = 0; i < fg.size(); ++i) dst[i] = static_cast<float>(lm.grad[i] * cfg.weight_mask / n_pos);
    }
    roi_head_backward(trace, opts, grad, sink);
  }
  if (n_rois > 0) out.loss.cls = cls_sum / n_rois;
  if (n_pos > 0) out.loss.mask = mask_sum / n_pos;
  out.loss.total = cfg.weight_ss * out.loss.ss + cfg.weight_cls * out.loss.cls + cfg.weight_mask * out.loss.mask;

  hg.set1_maps = std::move(sink.set1_maps);
  if (st.set2) hg.set2_maps = std::move(sink.set2_maps);
  if (st.sem) {
    const Tensor g_scores = softmax_channels_backward(st.sem->probs, sink.sem_probs);
    add_inplace(hg.sem_scores, g_scores);
  }
  out.grads = backbone_backward(st, params, hg);
  return out;
}

StepOutput compute_step(const ModelParams& params, const DatasetSample& sample, const TrainConfig& cfg, Rng& rng) {
  const int h = sample.image.dim(1);
  const int w = sample.image.dim(2);
  std::vector<Roi> gt_boxes;
  for (const auto& inst : sample.instances) gt_boxes.push_back(inst.box);
  const auto raw = propose_jitter(gt_boxes, cfg.proposals_per_image, cfg.jitter, w, h, rng);
  std::vector<Roi> valid;
  int skipped = 0;
  for (const Roi& r : raw) {
    const auto c = clip_roi(r, w, h);
    if (c && spans_feature_pixel(*c, kFeatureStride16)) {
      valid.push_back(*c);
    } else {
      ++skipped;
    }
  }
  std::vector<LabeledRoi> rois;
  if (!valid.empty()) rois = sample_rois(valid, sample.instances, cfg.sampling_spec(), rng);
  StepOutput out = compute_step_with_rois(params, sample, cfg, rois);
  out.loss.skipped_rois = skipped;
  return out;
}

void sgd_update(ModelParams& params, const ModelParams& grads, double lr) {
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto p = params.tensors[i].data();
    auto g = grads.tensors[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] = static_cast<float>(p[j] - lr * static_cast<double>(g[j]));
  }
}

TrainResult train_toy(const std::vector<DatasetSample>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw DataError("train: dataset is empty");
  TrainResult result;
  result.params = ModelParams::init(cfg.model_config(), cfg.seed);
  Rng rng(cfg.seed ^ 0x5EED5EEDULL);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  const int total = cfg.total_iterations();
  for (int it = 0; it < total; ++it) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      cursor = 0;
    }
    const DatasetSample& sample = dataset[order[cursor++]];
    const double lr = cfg.rate_at(it);
    StepOutput step = compute_step(result.params, sample, cfg, rng);
    if (!std::isfinite(step.loss.total)) {
      throw NumericalError("training diverged: loss is " + std::to_string(step.loss.total) + " at iteration " +
                           std::to_string(it));
    }
    if (lr != 0.0) sgd_update(result.params, step.grads, lr);
    for (const auto& t : result.params.tensors) {
      if (!all_finite(t)) throw NumericalError("training diverged: non-finite parameter at iteration " + std::to_string(it));
    }
    result.skipped_rois += step.loss.skipped_rois;
    result.log.push_back({it, lr, step.loss});
  }
  return result;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream os;
  os.precision(9);
  os << "iteration,lr,loss_ss,loss_cls,loss_mask,total\n";
  for (const auto& r : log) {
    os << r.iteration << ',' << r.lr << ',' << r.loss.ss << ',' << r.loss.cls << ',' << r.loss.mask << ','
       << r.loss.total << '\n';
  }
  return os.str();
}

}  // namespace biseg
