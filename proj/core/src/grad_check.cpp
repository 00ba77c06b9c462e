#include "biseg/grad_check.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <nlohmann/json.hpp>

#include "biseg/bayes_head.hpp"
#include "biseg/errors.hpp"
#include "biseg/losses.hpp"
#include "biseg/ops.hpp"
#include "biseg/rng.hpp"
#include "biseg/roi_head.hpp"
#include "biseg/score_maps.hpp"

namespace biseg {
namespace {

using Inputs = std::vector<Tensor64>;

struct GradCase {
  std::vector<std::string> names;
  Inputs inputs;
  std::function<double(const Inputs&)> value;
  std::function<Inputs(const Inputs&)> grad;
  // Discrete choices of the forward pass (relu signs, max branches). Empty when smooth.
  std::function<std::vector<std::uint8_t>(const Inputs&)> branches;
};

Tensor64 random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  Tensor64 t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Roi random_roi(Rng& rng, int width, int height) {
  const double w = rng.uniform(16, width);
  const double h = rng.uniform(16, height);
  Roi r;
  r.x0 = static_cast<float>(rng.uniform(0, width - w));
  r.y0 = static_cast<float>(rng.uniform(0, height - h));
  r.x1 = static_cast<float>(r.x0 + w);
  r.y1 = static_cast<float>(r.y0 + h);
  return r;
}

std::vector<std::uint8_t> max_branches(const BasicRoiPosterior<double>& p) {
  std::vector<std::uint8_t> b(p.inside.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = p.inside[i] >= p.outside[i];
  return b;
}

GradCase case_conv2d(Rng& rng) {
  const int cin = rng.range(1, 3);
  const int cout = rng.range(1, 4);
  const int k = rng.range(1, 3);
  const ConvSpec spec{rng.range(1, 2), rng.range(0, 1)};
  const int h = rng.range(k + 2, 8);
  const int w = rng.range(k + 2, 8);
  GradCase c;
  c.names = {"input", "weight", "bias"};
  c.inputs = {random_tensor(rng, {cin, h, w}), random_tensor(rng, {cout, cin, k, k}), random_tensor(rng, {cout})};
  const Tensor64 proj = random_tensor(rng, conv2d(c.inputs[0], c.inputs[1], c.inputs[2], spec).shape());
  c.value = [=](const Inputs& in) { return dot(proj, conv2d(in[0], in[1], in[2], spec)); };
  c.grad = [=](const Inputs& in) {
    auto g = conv2d_backward(in[0], in[1], proj, spec);
    return Inputs{g.input, g.weight, g.bias};
  };
  return c;
}

GradCase case_relu(Rng& rng) {
  GradCase c;
  c.names = {"input"};
  c.inputs = {random_tensor(rng, {rng.range(1, 3), rng.range(2, 6), rng.range(2, 6)})};
  const Tensor64 proj = random_tensor(rng, c.inputs[0].shape());
  c.value = [=](const Inputs& in) { return dot(proj, relu(in[0])); };
  c.grad = [=](const Inputs& in) { return Inputs{relu_backward(in[0], proj)}; };
  c.branches = [](const Inputs& in) {
    std::vector<std::uint8_t> b(in[0].size());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = in[0][i] > 0;
    return b;
  };
  return c;
}

GradCase case_softmax(Rng& rng) {
  GradCase c;
  c.names = {"input"};
  c.inputs = {random_tensor(rng, {rng.range(2, 5), rng.range(1, 4), rng.range(1, 4)}, -3, 3)};
  const Tensor64 proj = random_tensor(rng, c.inputs[0].shape());
  c.value = [=](const Inputs& in) { return dot(proj, softmax_channels(in[0])); };
  c.grad = [=](const Inputs& in) { return Inputs{softmax_channels_backward(softmax_channels(in[0]), proj)}; };
  return c;
}

GradCase case_upsample(Rng& rng) {
  GradCase c;
  c.names = {"input"};
  c.inputs = {random_tensor(rng, {rng.range(1, 3), rng.range(1, 6), rng.range(1, 6)})};
  const Tensor64 proj = random_tensor(rng, upsample_x2(c.inputs[0]).shape());
  c.value = [=](const Inputs& in) { return dot(proj, upsample_x2(in[0])); };
  c.grad = [=](const Inputs& in) { return Inputs{upsample_x2_backward(proj, in[0].shape())}; };
  return c;
}

GradCase case_assemble(Rng& rng) {
  const int k = rng.range(1, 5);
  const int cats = rng.range(2, 4);
  const int res = rng.range(k, 12);
  const int fh = rng.range(2, 5);
  const int fw = rng.range(2, 5);
  const int stride = 16;
  const Roi roi = random_roi(rng, fw * stride, fh * stride);
  GradCase c;
  c.names = {"maps"};
  c.inputs = {random_tensor(rng, {BasicScoreMapSet<double>::channels_for(k, cats), fh, fw})};
  const Tensor64 pin = random_tensor(rng, {cats, res, res});
  const Tensor64 pout = random_tensor(rng, {cats, res, res});
  auto make = [=](const Tensor64& maps) { return BasicScoreMapSet<double>{maps, k, stride, cats}; };
  c.value = [=](const Inputs& in) {
    const auto lik = assemble(make(in[0]), roi, res);
    return dot(pin, lik.inside) + dot(pout, lik.outside);
  };
  c.grad = [=](const Inputs& in) {
    const auto plan = plan_assembly(in[0].shape(), k, stride, cats, roi, res);
    Tensor64 g(in[0].shape());
    scatter_likelihood_grad(g, plan, BasicRoiLikelihood<double>{pin, pout});
    return Inputs{g};
  };
  return c;
}

GradCase case_fuse(Rng& rng) {
  const int cats = rng.range(2, 4);
  const int m1 = rng.range(1, 6);
  GradCase c;
  c.names = {"coarse.inside", "coarse.outside", "fine.inside", "fine.outside"};
  c.inputs = {random_tensor(rng, {cats, m1, m1}), random_tensor(rng, {cats, m1, m1}),
              random_tensor(rng, {cats, 2 * m1, 2 * m1}), random_tensor(rng, {cats, 2 * m1, 2 * m1})};
  const Tensor64 pin = random_tensor(rng, {cats, 2 * m1, 2 * m1});
  const Tensor64 pout = random_tensor(rng, {cats, 2 * m1, 2 * m1});
  c.value = [=](const Inputs& in) {
    const auto f = fuse(BasicRoiLikelihood<double>{in[0], in[1]}, BasicRoiLikelihood<double>{in[2], in[3]});
    return dot(pin, f.inside) + dot(pout, f.outside);
  };
  c.grad = [=](const Inputs&) {
    auto [gc, gf] = fuse_backward(BasicRoiLikelihood<double>{pin, pout}, m1);
    return Inputs{gc.inside, gc.outside, gf.inside, gf.outside};
  };
  return c;
}

GradCase case_crop_prior(Rng& rng) {
  const int cats = rng.range(2, 4);
  const int hs = rng.range(2, 8);
  const int ws = rng.range(2, 8);
  const int res = rng.range(2, 16);
  const Roi roi = random_roi(rng, ws * 8, hs * 8);
  GradCase c;
  c.names = {"probs"};
  c.inputs = {random_tensor(rng, {cats, hs, ws}, 0, 1)};
  const Tensor64 proj = random_tensor(rng, {cats, res, res});
  auto sem = [](const Tensor64& probs) {
    BasicSemanticHeadOutput<double> s;
    s.scores = probs;
    s.probs = probs;
    return s;
  };
  c.value = [=](const Inputs& in) { return dot(proj, crop_prior(sem(in[0]), roi, res)); };
  c.grad = [=](const Inputs& in) {
    Tensor64 g(in[0].shape());
    scatter_crop_grad(g, plan_crop(in[0].shape(), roi, 8, res), proj);
    return Inputs{g};
  };
  return c;
}

GradCase case_bayes(Rng& rng) {
  const Shape s = {rng.range(2, 4), rng.range(1, 8), rng.range(1, 8)};
  GradCase c;
  c.names = {"prior", "likelihood.inside", "likelihood.outside"};
  c.inputs = {random_tensor(rng, s, 0, 1), random_tensor(rng, s), random_tensor(rng, s)};
  const Tensor64 pin = random_tensor(rng, s);
  const Tensor64 pout = random_tensor(rng, s);
  c.value = [=](const Inputs& in) {
    const auto p = bayes_combine(in[0], BasicRoiLikelihood<double>{in[1], in[2]});
    return dot(pin, p.inside) + dot(pout, p.outside);
  };
  c.grad = [=](const Inputs& in) {
    auto g = bayes_combine_backward(in[0], BasicRoiLikelihood<double>{in[1], in[2]},
                                    BasicRoiPosterior<double>{pin, pout});
    return Inputs{g.prior, g.likelihood.inside, g.likelihood.outside};
  };
  return c;
}

GradCase case_mask_and_score(Rng& rng) {
  const int cats = rng.range(2, 4);
  const int m = rng.range(1, 8);
  const Shape s = {cats, m, m};
  GradCase c;
  c.names = {"posterior.inside", "posterior.outside"};
  c.inputs = {random_tensor(rng, s, -2, 2), random_tensor(rng, s, -2, 2)};
  BasicRoiScoresGrad<double> w;
  w.fg_prob = random_tensor(rng, s);
  for (int i = 0; i < cats; ++i) {
    w.class_logits.push_back(rng.uniform(-1, 1));
    w.class_scores.push_back(rng.uniform(-1, 1));
  }
  c.value = [=](const Inputs& in) {
    const auto out = mask_and_score(BasicRoiPosterior<double>{in[0], in[1]});
    return dot(w.fg_prob, out.fg_prob) + dot(w.class_logits, out.class_logits) +
           dot(w.class_scores, out.class_scores);
  };
  c.grad = [=](const Inputs& in) {
    const BasicRoiPosterior<double> post{in[0], in[1]};
    const auto g = mask_and_score_backward(post, mask_and_score(post), w);
    return Inputs{g.inside, g.outside};
  };
  c.branches = [](const Inputs& in) { return max_branches(BasicRoiPosterior<double>{in[0], in[1]}); };
  return c;
}

LabelMap random_labels(Rng& rng, int h, int w, int cats) {
  LabelMap m(h, w);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(cats)));
  return m;
}

GradCase case_loss_ss(Rng& rng) {
  const int cats = rng.range(2, 5);
  const int h = rng.range(1, 5);
  const int w = rng.range(1, 5);
  const LabelMap gt = random_labels(rng, h, w, cats);
  GradCase c;
  c.names = {"scores"};
  c.inputs = {random_tensor(rng, {cats, h, w}, -3, 3)};
  auto sem = [](const Tensor64& scores) {
    BasicSemanticHeadOutput<double> s;
    s.scores = scores;
    s.probs = softmax_channels(scores);
    return s;
  };
  c.value = [=](const Inputs& in) { return loss_ss(sem(in[0]), gt).value; };
  c.grad = [=](const Inputs& in) { return Inputs{loss_ss(sem(in[0]), gt).grad}; };
  return c;
}

GradCase case_loss_cls(Rng& rng) {
  const int cats = rng.range(2, 6);
  const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cats)));
  GradCase c;
  c.names = {"class_logits"};
  c.inputs = {random_tensor(rng, {cats}, -3, 3)};
  auto scores = [](const Tensor64& logits) {
    BasicRoiScores<double> s;
    s.class_logits = logits.values();
    s.class_scores = softmax_vector<double>(logits.data());
    return s;
  };
  c.value = [=](const Inputs& in) { return loss_cls(scores(in[0]), label).value; };
  c.grad = [=](const Inputs& in) {
    const auto g = loss_cls(scores(in[0]), label).grad;
    return Inputs{Tensor64({cats}, g)};
  };
  return c;
}

GradCase case_loss_mask(Rng& rng) {
  const int m = rng.range(1, 8);
  Tensor64 gt({m, m});
  for (auto& v : gt.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  GradCase c;
  c.names = {"fg_prob"};
  c.inputs = {random_tensor(rng, {m, m}, 0.1, 0.9)};
  c.value = [=](const Inputs& in) { return loss_mask(in[0], gt).value; };
  c.grad = [=](const Inputs& in) { return Inputs{loss_mask(in[0], gt).grad}; };
  return c;
}

// set 1 + set 2 + semantic logits through the whole ROI head and all three losses.
GradCase case_full_head(Rng& rng) {
  const int cats = rng.range(2, 4);
  const int k1 = rng.range(1, 4);
  const int k2 = rng.range(1, 5);
  const int m1 = rng.range(std::max(k1, (k2 + 1) / 2), 8);
  const int h16 = rng.range(2, 4);
  const int w16 = rng.range(2, 4);
  const Roi roi = random_roi(rng, w16 * 16, h16 * 16);
  const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(cats)));
  Tensor64 gt_mask({2 * m1, 2 * m1});
  for (auto& v : gt_mask.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const LabelMap gt_map = random_labels(rng, 2 * h16, 2 * w16, cats);
  HeadOptions opts;
  opts.use_prior = true;
  opts.use_fusion = true;
  opts.coarse_resolution = m1;
  opts.fine_resolution = 2 * m1;

  GradCase c;
  c.names = {"set1.maps", "set2.maps", "semantic.scores"};
  c.inputs = {random_tensor(rng, {BasicScoreMapSet<double>::channels_for(k1, cats), h16, w16}),
              random_tensor(rng, {BasicScoreMapSet<double>::channels_for(k2, cats), 2 * h16, 2 * w16}),
              random_tensor(rng, {cats, 2 * h16, 2 * w16}, -2, 2)};

  struct Built {
    BasicScoreMapSet<double> s1, s2;
    BasicSemanticHeadOutput<double> sem;
  };
  auto build = [=](const Inputs& in) {
    Built b{{in[0], k1, 16, cats}, {in[1], k2, 8, cats}, {}};
    b.sem.scores = in[2];
    b.sem.probs = softmax_channels(in[2]);
    return b;
  };
  auto fg_plane = [](const BasicRoiScores<double>& s, int cat) {
    const int m = s.fg_prob.dim(1);
    Tensor64 fg({m, m});
    std::copy_n(s.fg_prob.plane(cat), fg.size(), fg.data().begin());
    return fg;
  };
  c.value = [=](const Inputs& in) {
    const Built b = build(in);
    const auto t = roi_head_forward(RoiHeadInputs<double>{&b.s1, &b.s2, &b.sem}, roi, opts);
    double v = loss_ss(b.sem, gt_map).value + loss_cls(t.scores, label).value;
    if (label > 0) v += loss_mask(fg_plane(t.scores, label), gt_mask).value;
    return v;
  };
  c.grad = [=](const Inputs& in) {
    const Built b = build(in);
    const auto t = roi_head_forward(RoiHeadInputs<double>{&b.s1, &b.s2, &b.sem}, roi, opts);
    BasicRoiScoresGrad<double> g;
    g.class_logits = loss_cls(t.scores, label).grad;
    if (label > 0) {
      const auto lm = loss_mask(fg_plane(t.scores, label), gt_mask);
      g.fg_prob = Tensor64(t.scores.fg_prob.shape());
      std::copy_n(lm.grad.data().begin(), lm.grad.size(), g.fg_prob.plane(label));
    }
    RoiHeadGradSink<double> sink{Tensor64(in[0].shape()), Tensor64(in[1].shape()), Tensor64(in[2].shape())};
    roi_head_backward(t, opts, g, sink);
    Tensor64 g_sem = softmax_channels_backward(b.sem.probs, sink.sem_probs);
    add_inplace(g_sem, loss_ss(b.sem, gt_map).grad);
    return Inputs{sink.set1_maps, sink.set2_maps, g_sem};
  };
  c.branches = [=](const Inputs& in) {
    const Built b = build(in);
    return max_branches(roi_head_forward(RoiHeadInputs<double>{&b.s1, &b.s2, &b.sem}, roi, opts).posterior);
  };
  return c;
}

using Builder = GradCase (*)(Rng&);

const std::vector<std::pair<std::string, Builder>>& registry() {
  static const std::vector<std::pair<std::string, Builder>> kScopes = {
      {"conv2d", case_conv2d},
      {"relu", case_relu},
      {"softmax_channels", case_softmax},
      {"upsample_x2", case_upsample},
      {"assemble", case_assemble},
      {"fuse", case_fuse},
      {"crop_prior", case_crop_prior},
      {"bayes_combine", case_bayes},
      {"mask_and_score", case_mask_and_score},
      {"loss_ss", case_loss_ss},
      {"loss_cls", case_loss_cls},
      {"loss_mask", case_loss_mask},
      {"full-head", case_full_head},
  };
  return kScopes;
}

constexpr std::size_t kCoordsPerTrial = 16;

void check_scope(const std::string& scope, Builder build, int trials, std::uint64_t seed,
                 std::vector<GradCheckGroup>& out) {
  Rng rng(seed);
  std::vector<GradCheckGroup> groups;
  for (int trial = 0; trial < trials; ++trial) {
    GradCase c = build(rng);
    if (groups.empty()) {
      for (const auto& n : c.names) groups.push_back({scope, n, 0.0, 0, 0, 0});
    }
    const Inputs analytic = c.grad(c.inputs);
    for (std::size_t g = 0; g < c.inputs.size(); ++g) {
      auto& rep = groups[g];
      ++rep.trials;
      const std::size_t n = c.inputs[g].size();
      std::vector<std::size_t> coords;
      if (n <= kCoordsPerTrial) {
        for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
      } else {
        for (std::size_t i = 0; i < kCoordsPerTrial; ++i) coords.push_back(rng.below(n));
      }
      for (std::size_t i : coords) {
        Inputs plus = c.inputs;
        Inputs minus = c.inputs;
        plus[g][i] += kGradCheckStep;
        minus[g][i] -= kGradCheckStep;
        if (c.branches && (c.branches(plus) != c.branches(minus) || c.branches(plus) != c.branches(c.inputs))) {
          ++rep.skipped;
          continue;
        }
        const double numeric = (c.value(plus) - c.value(minus)) / (2 * kGradCheckStep);
        const double a = analytic[g][i];
        const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        ++rep.checked;
      }
    }
  }
  out.insert(out.end(), groups.begin(), groups.end());
}

}  // namespace

double GradCheckReport::max_error() const {
  double m = 0;
  for (const auto& g : groups) m = std::max(m, g.max_rel_error);
  return m;
}

bool GradCheckReport::passed(double tolerance) const {
  for (const auto& g : groups) {
    if (!(g.max_rel_error < tolerance) || g.checked == 0) return false;
  }
  return !groups.empty();
}

const std::vector<std::string>& gradcheck_scopes() {
  static const std::vector<std::string> kNames = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : registry()) v.push_back(name);
    return v;
  }();
  return kNames;
}

GradCheckReport grad_check(std::string_view scope, int trials, std::uint64_t seed) {
  if (trials < 1) throw ConfigError("gradcheck: trials must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  bool found = false;
  for (std::size_t i = 0; i < registry().size(); ++i) {
    const auto& [name, build] = registry()[i];
    if (scope != "all" && scope != name) continue;
    found = true;
    check_scope(name, build, trials, Rng::derive(seed, i).next(), report.groups);
  }
  if (!found) {
    std::string known = "all";
    for (const auto& n : gradcheck_scopes()) known += ", " + n;
    throw ConfigError("gradcheck: unknown scope '" + std::string(scope) + "' (known: " + known + ")");
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string gradcheck_report_json(const GradCheckReport& report) {
  nlohmann::ordered_json j;
  j["step"] = kGradCheckStep;
  j["tolerance"] = kGradCheckTolerance;
  j["passed"] = report.passed();
  j["max_rel_error"] = report.max_error();
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& g : report.groups) {
    nlohmann::ordered_json e;
    e["scope"] = g.scope;
    e["group"] = g.group;
    e["max_rel_error"] = g.max_rel_error;
    e["trials"] = g.trials;
    e["checked"] = g.checked;
    e["skipped"] = g.skipped;
    groups.push_back(e);
  }
  j["groups"] = groups;
  return j.dump(2) + "\n";
}

std::string gradcheck_report_text(const GradCheckReport& report) {
  std::string out;
  char line[256];
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof line, "%-18s %-20s max_rel_err=%.3e trials=%d checked=%ld skipped=%ld %s\n",
                  g.scope.c_str(), g.group.c_str(), g.max_rel_error, g.trials, g.checked, g.skipped,
                  g.max_rel_error < kGradCheckTolerance && g.checked > 0 ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof line, "overall max_rel_err=%.3e %s\n", report.max_error(),
                report.passed() ? "PASS" : "FAIL");
  return out + line;
}

}  // namespace biseg
