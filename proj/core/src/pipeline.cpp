#include "biseg/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "biseg/roi_head.hpp"

namespace biseg {

void InferenceConfig::validate() const {
  if (proposal_count < 0) throw ConfigError("infer.proposal_count must be >= 0");
  if (!(nms_iou > 0 && nms_iou < 1)) throw ConfigError("infer.nms_iou must be in (0,1)");
  if (!(vote_iou > 0 && vote_iou <= 1)) throw ConfigError("infer.vote_iou must be in (0,1]");
  if (!(binarize_thresh > 0 && binarize_thresh < 1)) throw ConfigError("infer.binarize_thresh must be in (0,1)");
}

LabelMap semantic_class_map(const SemanticHeadOutput& sem, int height, int width) {
  const int cats = sem.probs.dim(0);
  const int hs = sem.probs.dim(1);
  const int ws = sem.probs.dim(2);
  LabelMap out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(y / sem.stride, hs - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(x / sem.stride, ws - 1);
      int best = 0;
      for (int c = 1; c < cats; ++c) {
        if (sem.probs.at(c, sy, sx) > sem.probs.at(best, sy, sx)) best = c;
      }
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

ImageResult run_image(const Tensor& image, const std::vector<Roi>& proposals, const ModelParams& params,
                      const InferenceConfig& cfg) {
  const int h = image.dim(1);
  const int w = image.dim(2);
  const ForwardState st = backbone_forward(image, params);
  const HeadOptions opts = head_options_for(params.config);
  RoiHeadInputs<float> in{&st.set1, st.set2 ? &*st.set2 : nullptr, st.sem ? &*st.sem : nullptr};

  ImageResult result;
  std::vector<Detection> dets;
  for (const Roi& raw : proposals) {
    const auto roi = clip_roi(raw, w, h);
    if (!roi || !spans_feature_pixel(*roi, kFeatureStride16)) {
      ++result.proposals_discarded;
      continue;
    }
    ++result.proposals_used;
    const auto trace = roi_head_forward(in, *roi, opts);
    const int cat = argmax_category(trace.scores);
    if (cat == 0) continue;
    Detection d;
    d.category = cat;
    d.score = trace.scores.class_scores[cat];
    d.box = *roi;
    const int m = opts.fine_resolution;
    d.mask = Tensor({m, m});
    std::copy_n(trace.scores.fg_prob.plane(cat), d.mask.size(), d.mask.data().begin());
    dets.push_back(std::move(d));
  }
  result.kept = nms(dets, cfg.nms_iou);
  result.instances = mask_vote(result.kept, dets, cfg.vote_iou, cfg.binarize_thresh, h, w);
  if (st.sem) result.class_map = semantic_class_map(*st.sem, h, w);
  return result;
}

std::vector<Roi> proposals_for(const DatasetSample& sample, int image_index, const InferenceConfig& cfg,
                               const ProposalTable* table) {
  const int h = sample.image.dim(1);
  const int w = sample.image.dim(2);
  switch (cfg.proposal_mode) {
    case ProposalMode::kJitterGt: {
      std::vector<Roi> gt;
      for (const auto& inst : sample.instances) gt.push_back(inst.box);
      Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(image_index));
      return propose_jitter(gt, cfg.proposal_count, cfg.jitter, w, h, rng);
    }
    case ProposalMode::kGrid:
      return propose_grid(w, h, cfg.proposal_count);
    case ProposalMode::kFile: {
      if (!table) throw ConfigError("proposal mode 'file' requires a proposal CSV");
      const auto it = table->find(sample.id);
      if (it == table->end()) return {};
      std::vector<Roi> rois = it->second;
      if (static_cast<int>(rois.size()) > cfg.proposal_count) rois.resize(static_cast<std::size_t>(cfg.proposal_count));
      return rois;
    }
  }
  return {};
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      const std::size_t lo = n * t / workers;
      const std::size_t hi = n * (t + 1) / workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<ImageResult> run_dataset(const std::vector<DatasetSample>& samples, const ModelParams& params,
                                     const InferenceConfig& cfg, const ProposalTable* table, int threads) {
  cfg.validate();
  std::vector<ImageResult> out(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    out[i] = run_image(samples[i].image, proposals_for(samples[i], static_cast<int>(i), cfg, table), params, cfg);
  });
  return out;
}

}  // namespace biseg
