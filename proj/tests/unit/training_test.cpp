#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "biseg/grad_check.hpp"
#include "biseg/losses.hpp"
#include "biseg/model.hpp"
#include "biseg/ops.hpp"
#include "biseg/sampling.hpp"
#include "biseg/trainer.hpp"
#include "oracles.hpp"

using namespace biseg;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.width8 = 8;
  c.width16 = 8;
  c.k1 = 3;
  c.k2 = 3;
  c.roi_res1 = 6;
  return c;
}

TrainConfig small_train(const std::string& variant = "biseg-fused") {
  TrainConfig t;
  t.variant = variant;
  t.width8 = 8;
  t.width16 = 8;
  t.k1 = 3;
  t.k2 = 3;
  t.roi_res1 = 6;
  t.roi_res2 = 12;
  t.rois_per_image = 4;
  t.proposals_per_image = 8;
  t.lr_schedule = {{5, 0.01}};
  t.seed = 11;
  return t;
}

Instance instance_from_box(int h, int w, int x0, int y0, int x1, int y1, int category, int ordinal) {
  Instance inst;
  inst.ordinal = ordinal;
  inst.category = category;
  inst.mask = LabelMap(h, w);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) inst.mask.at(y, x) = 1;
  }
  inst.box = Roi{static_cast<float>(x0), static_cast<float>(y0), static_cast<float>(x1), static_cast<float>(y1), 1};
  return inst;
}

double max_abs(const Tensor& t) {
  double m = 0;
  for (float v : t.values()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("backbone_forward shapes") {
  ModelConfig c;
  const auto params = ModelParams::init(c, 1);
  const auto st = backbone_forward(Tensor({3, 64, 64}), params);
  CHECK(st.set1.maps.shape() == Shape{392, 4, 4});
  REQUIRE(st.set2);
  CHECK(st.set2->maps.shape() == Shape{648, 8, 8});
  REQUIRE(st.sem);
  CHECK(st.sem->probs.shape() == Shape{4, 8, 8});
  CHECK(st.set1.stride == 16);
  CHECK(st.set2->stride == 8);
}

TEST_CASE("zero parameters give zero score maps") {
  const auto params = ModelParams::zeros(ModelConfig{});
  const auto st = backbone_forward(Tensor({3, 64, 64}), params);
  CHECK(max_abs(st.set1.maps) == 0.0);
  CHECK(max_abs(st.set2->maps) == 0.0);
  CHECK(max_abs(st.sem->scores) == 0.0);
}

TEST_CASE("image dimensions must be multiples of 16") {
  const auto params = ModelParams::init(small_config(), 1);
  try {
    backbone_forward(Tensor({3, 40, 64}), params);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("pad to 48x64") != std::string::npos);
  }
}

TEST_CASE("one backbone weight moves both the semantic and the set-1 outputs") {
  const auto c = small_config();
  auto params = ModelParams::init(c, 4);
  Rng rng(9);
  const Tensor image = oracle::random_tensor<float>(rng, {3, 32, 32}, 0, 1);
  const auto base = backbone_forward(image, params);
  params.get("backbone.conv1.weight")[0] += 0.05f;
  const auto moved = backbone_forward(image, params);
  CHECK(max_abs_diff(base.sem->scores, moved.sem->scores) > 0);
  CHECK(max_abs_diff(base.set1.maps, moved.set1.maps) > 0);
  CHECK(max_abs_diff(base.set2->maps, moved.set2->maps) > 0);
}

TEST_CASE("score-map head channel counts") {
  for (int k : {1, 3, 7, 9}) {
    ModelConfig c = small_config();
    c.k1 = k;
    c.k2 = k + 2;
    c.roi_res1 = 20;
    const auto p = ModelParams::zeros(c);
    CHECK(p.get("set1.weight").dim(0) == 2 * k * k * 4);
    CHECK(p.get("set2.weight").dim(0) == 2 * (k + 2) * (k + 2) * 4);
  }
}

TEST_CASE("Glorot-uniform init") {
  const auto c = small_config();
  const auto p = ModelParams::init(c, 3);
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    const Tensor& t = p.tensors[i];
    if (t.ndim() == 1) {
      CHECK(max_abs(t) == 0.0);
      continue;
    }
    const int fan_in = t.dim(1) * t.dim(2) * t.dim(3);
    const int fan_out = t.dim(0) * t.dim(2) * t.dim(3);
    const double s = std::sqrt(6.0 / (fan_in + fan_out));
    CHECK(max_abs(t) <= s);
    CHECK(max_abs(t) > 0.5 * s);
  }
  CHECK(ModelParams::init(c, 3).tensors == p.tensors);
  CHECK(ModelParams::init(c, 4).tensors != p.tensors);
}

TEST_CASE("parameters per variant") {
  auto names = [](const std::string& v) {
    TrainConfig t;
    t.variant = v;
    const auto p = ModelParams::zeros(t.model_config());
    return std::set<std::string>(p.names.begin(), p.names.end());
  };
  const auto fcis = names("fcis-star");
  const auto naive = names("naive-multitask");
  const auto single = names("biseg-single");
  const auto fused = names("biseg-fused");
  CHECK(fcis.count("semantic.weight") == 0);
  CHECK(fcis.count("set2.weight") == 0);
  CHECK(naive.count("semantic.weight") == 1);
  CHECK(naive == single);
  CHECK(fused.count("set2.weight") == 1);
  CHECK(std::includes(fused.begin(), fused.end(), single.begin(), single.end()));
  CHECK(std::includes(single.begin(), single.end(), fcis.begin(), fcis.end()));
}

TEST_CASE("sample_rois") {
  const int h = 64, w = 64;
  std::vector<Instance> gt = {instance_from_box(h, w, 0, 0, 20, 20, 2, 1),
                              instance_from_box(h, w, 30, 30, 50, 60, 3, 2)};
  RoiSamplingSpec spec{100, 0.5, 8};
  Rng rng(1);

  SUBCASE("proposal equal to a gt box is positive with IoU 1") {
    const auto out = sample_rois({gt[1].box}, gt, spec, rng);
    REQUIRE(out.size() == 1);
    CHECK(out[0].label == 3);
    CHECK(out[0].iou == 1.0);
    CHECK(out[0].gt_index == 1);
    REQUIRE(out[0].gt_mask);
    for (float v : out[0].gt_mask->values()) CHECK(v == 1.0f);
  }
  SUBCASE("IoU 0.49 is negative, exactly 0.5 is positive") {
    // [0,20]x[0,20] vs [0,20]x[0,w']: IoU = min(20, w') / max(20, w')
    const Roi at_half{0, 0, 40, 20, 0};
    const Roi below{0, 0, 20.0f * 100 / 49, 20, 0};
    auto out = sample_rois({at_half, below}, gt, spec, rng);
    CHECK(out[0].iou == 0.5);
    CHECK(out[0].label == 2);
    CHECK(out[1].iou < 0.5);
    CHECK(out[1].iou > 0.489);
    CHECK(out[1].label == 0);
    CHECK_FALSE(out[1].gt_mask);
    CHECK(out[1].gt_index == -1);
  }
  SUBCASE("positive mask holds both values when the box exceeds the object") {
    const auto out = sample_rois({Roi{0, 0, 24, 24, 0}}, gt, spec, rng);
    REQUIRE(out[0].gt_mask);
    const auto& m = *out[0].gt_mask;
    CHECK(std::count(m.values().begin(), m.values().end(), 1.0f) > 0);
    CHECK(std::count(m.values().begin(), m.values().end(), 0.0f) > 0);
  }
  SUBCASE("20 random proposals match the pairwise IoU oracle") {
    Rng r2(5);
    std::vector<Roi> props;
    for (int i = 0; i < 20; ++i) props.push_back(oracle::random_box(r2, w, h, 4));
    props[3] = gt[0].box;
    const auto out = sample_rois(props, gt, spec, rng);
    REQUIRE(out.size() == 20);
    for (int i = 0; i < 20; ++i) {
      const double a = oracle::box_iou(props[i], gt[0].box);
      const double b = oracle::box_iou(props[i], gt[1].box);
      const double best = std::max(a, b);
      const int idx = b > a ? 1 : 0;
      CHECK(out[i].iou == doctest::Approx(best).epsilon(1e-6));
      if (best >= 0.5) {
        CHECK(out[i].label == gt[idx].category);
        CHECK(out[i].gt_index == idx);
      } else {
        CHECK(out[i].label == 0);
      }
    }
  }
  SUBCASE("subsample keeps proposal order and is seed-deterministic") {
    Rng r2(6);
    std::vector<Roi> props;
    for (int i = 0; i < 30; ++i) props.push_back(oracle::random_box(r2, w, h, 4));
    RoiSamplingSpec small{7, 0.5, 8};
    Rng a(42), b(42);
    const auto x = sample_rois(props, gt, small, a);
    const auto y = sample_rois(props, gt, small, b);
    REQUIRE(x.size() == 7);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i].roi == y[i].roi);
    std::vector<std::size_t> idx;
    for (const auto& lr : x) idx.push_back(std::find(props.begin(), props.end(), lr.roi) - props.begin());
    CHECK(std::is_sorted(idx.begin(), idx.end()));
  }
  SUBCASE("empty proposals throw") { CHECK_THROWS_AS(sample_rois({}, gt, spec, rng), DataError); }
}

TEST_CASE("loss_ss") {
  SUBCASE("uniform probabilities give ln 4") {
    SemanticHeadOutput s;
    s.scores = Tensor({4, 2, 3});
    s.probs = Tensor({4, 2, 3}, 0.25f);
    LabelMap gt(2, 3, 2);
    CHECK(loss_ss(s, gt).value == doctest::Approx(std::log(4.0)).epsilon(1e-6));
  }
  SUBCASE("confident correct logits give about 0") {
    SemanticHeadOutput s;
    s.scores = Tensor({4, 1, 2});
    s.scores.at(1, 0, 0) = 40;
    s.scores.at(3, 0, 1) = 40;
    LabelMap gt(1, 2);
    gt.at(0, 0) = 1;
    gt.at(0, 1) = 3;
    CHECK(loss_ss(s, gt).value < 1e-6);
  }
  SUBCASE("random 2x2 matches the scalar oracle") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      SemanticHeadOutput s;
      s.scores = oracle::random_tensor<float>(rng, {4, 2, 2}, -3, 3);
      s.probs = softmax_channels(s.scores);
      LabelMap gt(2, 2);
      for (auto& l : gt.labels) l = static_cast<std::uint8_t>(rng.below(4));
      double want = 0;
      std::vector<double> grad(16);
      for (int p = 0; p < 4; ++p) {
        double mx = -1e30, z = 0;
        for (int c = 0; c < 4; ++c) mx = std::max<double>(mx, s.scores[c * 4 + p]);
        for (int c = 0; c < 4; ++c) z += std::exp(s.scores[c * 4 + p] - mx);
        want += -(s.scores[gt.labels[p] * 4 + p] - mx - std::log(z)) / 4;
        for (int c = 0; c < 4; ++c) grad[c * 4 + p] = (std::exp(s.scores[c * 4 + p] - mx) / z - (c == gt.labels[p])) / 4;
      }
      const auto got = loss_ss(s, gt);
      CHECK(got.value == doctest::Approx(want).epsilon(1e-6));
      for (int i = 0; i < 16; ++i) CHECK(std::abs(got.grad[i] - grad[i]) < 1e-6);
    }
  }
  SUBCASE("out-of-range id") {
    SemanticHeadOutput s;
    s.scores = Tensor({4, 1, 1});
    s.probs = Tensor({4, 1, 1}, 0.25f);
    CHECK_THROWS_AS(loss_ss(s, LabelMap(1, 1, 4)), DataError);
  }
}

TEST_CASE("loss_cls") {
  RoiScores s;
  SUBCASE("certain correct class gives 0") {
    s.class_logits = {0, 0, 100, 0};
    s.class_scores = {0, 0, 1, 0};
    CHECK(loss_cls(s, 2).value < 1e-12);
  }
  SUBCASE("uniform over 4 gives ln 4") {
    s.class_logits = {1, 1, 1, 1};
    s.class_scores = {0.25f, 0.25f, 0.25f, 0.25f};
    CHECK(loss_cls(s, 0).value == doctest::Approx(std::log(4.0)).epsilon(1e-7));
  }
  SUBCASE("random logits match the oracle") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      s.class_logits.clear();
      for (int c = 0; c < 4; ++c) s.class_logits.push_back(static_cast<float>(rng.uniform(-4, 4)));
      s.class_scores = softmax_vector<float>(std::span<const float>(s.class_logits));
      const int label = static_cast<int>(rng.below(4));
      double z = 0;
      for (float l : s.class_logits) z += std::exp(static_cast<double>(l));
      const auto got = loss_cls(s, label);
      CHECK(got.value == doctest::Approx(std::log(z) - s.class_logits[label]).epsilon(1e-6));
      for (int c = 0; c < 4; ++c) {
        CHECK(std::abs(got.grad[c] - (std::exp(static_cast<double>(s.class_logits[c])) / z - (c == label))) < 1e-6);
      }
    }
  }
  SUBCASE("label out of range") {
    s.class_logits = {0, 0};
    s.class_scores = {0.5f, 0.5f};
    CHECK_THROWS_AS(loss_cls(s, 2), DataError);
  }
}

TEST_CASE("loss_mask") {
  SUBCASE("perfect prediction is clamped near 0") {
    Tensor p({2, 2}), g({2, 2});
    p[1] = g[1] = 1;
    p[2] = g[2] = 1;
    CHECK(loss_mask(p, g).value <= 1e-6);
  }
  SUBCASE("0.5 everywhere gives ln 2") {
    Rng rng(2);
    Tensor g = oracle::random_tensor<float>(rng, {5, 5}, 0, 1);
    for (auto& v : g.data()) v = v > 0.5f ? 1.0f : 0.0f;
    CHECK(loss_mask(Tensor({5, 5}, 0.5f), g).value == doctest::Approx(std::log(2.0)).epsilon(1e-7));
  }
  SUBCASE("random matches the pointwise oracle") {
    Rng rng(3);
    Tensor p = oracle::random_tensor<float>(rng, {6, 6}, 0.01, 0.99);
    Tensor g = oracle::random_tensor<float>(rng, {6, 6}, 0, 1);
    for (auto& v : g.data()) v = v > 0.5f ? 1.0f : 0.0f;
    double want = 0;
    for (std::size_t i = 0; i < p.size(); ++i) want -= g[i] ? std::log(p[i]) : std::log(1.0 - p[i]);
    want /= 36;
    const auto got = loss_mask(p, g);
    CHECK(got.value == doctest::Approx(want).epsilon(1e-6));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = g[i] ? -1.0 / p[i] : 1.0 / (1.0 - p[i]);
      CHECK(got.grad[i] == doctest::Approx(d / 36).epsilon(1e-5));
    }
  }
}

TEST_CASE("downsample_class_map reads cell centers") {
  LabelMap full(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) full.at(y, x) = static_cast<std::uint8_t>((y / 8) * 2 + x / 8);
  }
  full.at(4, 12) = 3;
  full.at(5, 12) = 0;
  const auto d = downsample_class_map(full, 8);
  CHECK(d.height == 2);
  CHECK(d.at(0, 0) == 0);
  CHECK(d.at(0, 1) == 3);
  CHECK(d.at(1, 0) == 2);
  CHECK(d.at(1, 1) == 3);
}

TEST_CASE("step losses and gradients") {
  SynthConfig sc;
  sc.height = sc.width = 32;
  sc.min_size = 12;
  sc.max_size = 20;
  const auto sample = generate_sample(5, 0, sc);
  TrainConfig cfg = small_train();
  const auto params = ModelParams::init(cfg.model_config(), 2);
  std::vector<LabeledRoi> rois;
  {
    Rng rng(1);
    std::vector<Roi> props;
    for (const auto& inst : sample.instances) props.push_back(inst.box);
    props.push_back(Roi{0, 0, 16, 16, 0});
    rois = sample_rois(props, sample.instances, cfg.sampling_spec(), rng);
  }

  SUBCASE("total is the exact sum of its terms") {
    const auto s = compute_step_with_rois(params, sample, cfg, rois);
    CHECK(s.loss.total == s.loss.ss + s.loss.cls + s.loss.mask);
    CHECK(s.loss.ss > 0);
    CHECK(s.loss.cls > 0);
    CHECK(s.loss.mask > 0);
  }
  SUBCASE("zeroing a weight removes that term's gradient") {
    auto only = [&](double ss, double cls, double mask) {
      TrainConfig c = cfg;
      c.weight_ss = ss;
      c.weight_cls = cls;
      c.weight_mask = mask;
      return compute_step_with_rois(params, sample, c, rois).grads;
    };
    const auto all = only(1, 1, 1);
    const auto no_ss = only(0, 1, 1);
    const auto just_ss = only(1, 0, 0);
    CHECK(no_ss.get("semantic.weight") != all.get("semantic.weight"));
    const auto& sem_only = just_ss.get("set1.weight");
    CHECK(max_abs(sem_only) == 0.0);
    // Backbone gradient is additive across terms up to float rounding.
    const Tensor& a = all.get("backbone.conv3.weight");
    const Tensor& b = no_ss.get("backbone.conv3.weight");
    const Tensor& c = just_ss.get("backbone.conv3.weight");
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - (b[i] + c[i])) <= 1e-5 * (1 + std::abs(a[i])));
    const auto zero = only(0, 0, 0);
    for (const auto& t : zero.tensors) CHECK(max_abs(t) == 0.0);
  }
  SUBCASE("both the semantic and the ROI losses reach the backbone") {
    TrainConfig c = cfg;
    c.weight_cls = c.weight_mask = 0;
    const auto g_ss = compute_step_with_rois(params, sample, c, rois).grads;
    c.weight_ss = 0;
    c.weight_cls = c.weight_mask = 1;
    const auto g_roi = compute_step_with_rois(params, sample, c, rois).grads;
    for (const char* name : {"backbone.conv1.weight", "backbone.conv4.weight"}) {
      CHECK(max_abs(g_ss.get(name)) > 0);
      CHECK(max_abs(g_roi.get(name)) > 0);
    }
    CHECK(max_abs(g_roi.get("backbone.conv5.weight")) > 0);
  }
  SUBCASE("fcis-star gives no semantic loss") {
    TrainConfig c = small_train("fcis-star");
    const auto p = ModelParams::init(c.model_config(), 2);
    const auto s = compute_step_with_rois(p, sample, c, rois);
    CHECK(s.loss.ss == 0);
    CHECK(s.loss.total == s.loss.cls + s.loss.mask);
  }
}

TEST_CASE("train_toy") {
  SynthConfig sc;
  const auto data = generate_samples(3, 4, sc);
  TrainConfig cfg = small_train();

  SUBCASE("rate 0 leaves parameters bitwise unchanged") {
    cfg.lr_schedule = {{4, 0.0}};
    const auto r = train_toy(data, cfg);
    CHECK(r.params.tensors == ModelParams::init(cfg.model_config(), cfg.seed).tensors);
    CHECK(r.log.size() == 4);
  }
  SUBCASE("same seed gives bitwise-identical parameters and logs") {
    const auto a = train_toy(data, cfg);
    const auto b = train_toy(data, cfg);
    CHECK(a.params.tensors == b.params.tensors);
    CHECK(train_log_csv(a.log) == train_log_csv(b.log));
    cfg.seed = 12;
    CHECK(train_toy(data, cfg).params.tensors != a.params.tensors);
  }
  SUBCASE("log CSV") {
    const auto r = train_toy(data, cfg);
    const std::string csv = train_log_csv(r.log);
    CHECK(csv.rfind("iteration,lr,loss_ss,loss_cls,loss_mask,total\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  }
  SUBCASE("divergence reports the iteration") {
    cfg.lr_schedule = {{20, 1e30}};
    try {
      train_toy(data, cfg);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("iteration") != std::string::npos);
    }
  }
  SUBCASE("empty dataset") { CHECK_THROWS_AS(train_toy({}, cfg), DataError); }
  SUBCASE("bad configs") {
    cfg.roi_res2 = 13;
    CHECK_THROWS_AS(train_toy(data, cfg), ConfigError);
    cfg = small_train();
    cfg.positive_iou_threshold = 1.0;
    CHECK_THROWS_AS(train_toy(data, cfg), ConfigError);
  }
}

TEST_CASE("one image, 50 iterations: total loss strictly decreases over the first 10") {
  const auto data = generate_samples(0, 1, SynthConfig{});
  TrainConfig cfg;
  cfg.lr_schedule = {{50, cfg.lr_schedule.front().rate}};
  const auto r = train_toy(data, cfg);
  REQUIRE(r.log.size() == 50);
  for (int i = 1; i < 10; ++i) {
    INFO("iteration " << i << ": " << r.log[i - 1].loss.total << " -> " << r.log[i].loss.total);
    CHECK(r.log[i].loss.total < r.log[i - 1].loss.total);
  }
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  CHECK(cfg.total_iterations() == 3000);
  CHECK(cfg.rate_at(0) == cfg.lr_schedule[0].rate);
  CHECK(cfg.rate_at(1999) == cfg.lr_schedule[0].rate);
  CHECK(cfg.rate_at(2000) == cfg.lr_schedule[1].rate);
  CHECK(cfg.lr_schedule[0].rate == doctest::Approx(10 * cfg.lr_schedule[1].rate));
  const auto s = cfg.scaled_schedule(300);
  REQUIRE(s.size() == 2);
  CHECK(s[0].iterations == 200);
  CHECK(s[1].iterations == 100);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "biseg_ckpt_test";
  std::filesystem::remove_all(dir);
  const auto p = ModelParams::init(small_config(), 8);
  save_checkpoint(dir, p);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "set1.weight.ten"));
  const auto q = load_checkpoint(dir);
  CHECK(q.config == p.config);
  CHECK(q.names == p.names);
  CHECK(q.tensors == p.tensors);
  std::filesystem::remove(dir / "set1.bias.ten");
  CHECK_THROWS_AS(load_checkpoint(dir), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("grad_check scopes") {
  SUBCASE("conv2d, 10 trials") {
    const auto r = grad_check("conv2d", 10, 1);
    CHECK(r.max_error() < 1e-4);
  }
  SUBCASE("bayes_combine") {
    const auto r = grad_check("bayes_combine", 10, 1);
    CHECK(r.max_error() < 1e-6);
  }
  SUBCASE("full-head") {
    const auto r = grad_check("full-head", 3, 1);
    CHECK(r.passed());
    CHECK(r.max_error() < 1e-4);
    for (const auto& g : r.groups) CHECK(g.checked > 0);
  }
  SUBCASE("unknown scope") { CHECK_THROWS_AS(grad_check("nope", 1, 1), ConfigError); }
  SUBCASE("report is deterministic") {
    CHECK(gradcheck_report_json(grad_check("all", 1, 3)) == gradcheck_report_json(grad_check("all", 1, 3)));
  }
}

}  // TEST_SUITE
