#include "biseg/synth_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "biseg/rng.hpp"

namespace biseg {
namespace {

// Mean RGB per category; per-instance jitter makes neighbouring categories overlap.
constexpr std::array<std::array<double, 3>, kSynthNumClasses + 1> kCategoryColor = {{
    {0.0, 0.0, 0.0},
    {0.78, 0.42, 0.36},  // disk
    {0.42, 0.72, 0.40},  // square
    {0.40, 0.46, 0.78},  // triangle
}};

struct Placement {
  ShapeKind kind;
  double cx, cy;  // center in pixels
  int size;       // bounding extent in pixels
};

bool covers(const Placement& s, double px, double py) {
  const double half = s.size / 2.0;
  switch (s.kind) {
    case ShapeKind::kDisk: {
      const double dx = px - s.cx;
      const double dy = py - s.cy;
      return dx * dx + dy * dy <= half * half;
    }
    case ShapeKind::kSquare:
      return px >= s.cx - half && px < s.cx + half && py >= s.cy - half && py < s.cy + half;
    case ShapeKind::kTriangle: {
      // Upward isosceles triangle: apex at top center, base along the bottom edge.
      const double top = s.cy - half;
      const double bottom = s.cy + half;
      if (py < top || py >= bottom) return false;
      const double t = (py - top) / (bottom - top);
      return std::abs(px - s.cx) <= t * half;
    }
  }
  return false;
}

LabelMap rasterize(const Placement& s, int h, int w) {
  LabelMap m(h, w);
  const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.size / 2.0)) - 1);
  const int y1 = std::min(h, static_cast<int>(std::ceil(s.cy + s.size / 2.0)) + 1);
  const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.size / 2.0)) - 1);
  const int x1 = std::min(w, static_cast<int>(std::ceil(s.cx + s.size / 2.0)) + 1);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (covers(s, x + 0.5, y + 0.5)) m.at(y, x) = 1;
    }
  }
  return m;
}

float quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(c * 255.0) / 255.0);
}

}  // namespace

void SynthConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0) {
    throw ConfigError("synth: height and width must be positive multiples of 16");
  }
  if (min_instances < 0 || max_instances < min_instances) throw ConfigError("synth: bad instances-per-image range");
  if (max_instances > 255) throw ConfigError("synth: at most 255 instances per image");
  if (min_size < 4 || max_size < min_size || max_size > std::min(height, width)) {
    throw ConfigError("synth: bad shape size range");
  }
  if (cluster_prob < 0 || cluster_prob > 1) throw ConfigError("synth: cluster_prob must be in [0,1]");
}

std::optional<Roi> mask_bounds(const LabelMap& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  Roi r;
  r.x0 = static_cast<float>(x0);
  r.y0 = static_cast<float>(y0);
  r.x1 = static_cast<float>(x1 + 1);
  r.y1 = static_cast<float>(y1 + 1);
  r.objectness = 1.0f;
  return r;
}

LabelMap class_map_from_instances(const std::vector<Instance>& instances, int height, int width) {
  LabelMap cm(height, width);
  std::vector<const Instance*> order;
  for (const auto& inst : instances) order.push_back(&inst);
  std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->ordinal < b->ordinal; });
  for (const Instance* inst : order) {
    for (std::size_t i = 0; i < cm.size(); ++i) {
      if (inst->mask.labels[i]) cm.labels[i] = static_cast<std::uint8_t>(inst->category);
    }
  }
  return cm;
}

DatasetSample generate_sample(std::uint64_t seed, int index, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(index));
  const int h = cfg.height;
  const int w = cfg.width;

  char id[16];
  std::snprintf(id, sizeof id, "%06d", index);
  DatasetSample sample;
  sample.id = id;

  // owner[p] = index into `placed` of the topmost shape, or -1.
  std::vector<int> owner(static_cast<std::size_t>(h) * w, -1);
  std::vector<Placement> placed;
  std::vector<LabelMap> full_masks;

  const int target = rng.range(cfg.min_instances, cfg.max_instances);
  constexpr int kAttempts = 30;
  for (int n = 0; n < target; ++n) {
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      Placement s;
      s.kind = static_cast<ShapeKind>(rng.range(1, kSynthNumClasses));
      s.size = rng.range(cfg.min_size, cfg.max_size);
      const double half = s.size / 2.0;
      if (!placed.empty() && cfg.occlusion && rng.bernoulli(cfg.cluster_prob)) {
        const Placement& anchor = placed[rng.below(placed.size())];
        s.cx = anchor.cx + rng.uniform(-0.6, 0.6) * s.size;
        s.cy = anchor.cy + rng.uniform(-0.6, 0.6) * s.size;
      } else {
        s.cx = rng.uniform(half, w - half);
        s.cy = rng.uniform(half, h - half);
      }
      s.cx = std::clamp(s.cx, half, w - half);
      s.cy = std::clamp(s.cy, half, h - half);

      LabelMap m = rasterize(s, h, w);
      std::vector<int> visible(placed.size() + 1, 0);
      bool overlaps = false;
      for (std::size_t p = 0; p < owner.size(); ++p) {
        if (m.labels[p]) {
          ++visible.back();
          overlaps |= owner[p] >= 0;
        } else if (owner[p] >= 0) {
          ++visible[owner[p]];
        }
      }
      if (overlaps && !cfg.occlusion) continue;
      if (std::any_of(visible.begin(), visible.end(), [&](int v) { return v < cfg.min_visible_pixels; })) continue;
      const int me = static_cast<int>(placed.size());
      for (std::size_t p = 0; p < owner.size(); ++p) {
        if (m.labels[p]) owner[p] = me;
      }
      placed.push_back(s);
      full_masks.push_back(std::move(m));
      break;
    }
  }

  // Background: tinted gray with per-pixel noise.
  const double base = rng.uniform(0.25, 0.6);
  std::array<double, 3> bg{};
  for (auto& c : bg) c = base + rng.uniform(-0.08, 0.08);
  std::vector<std::array<double, 3>> colors;
  for (const auto& s : placed) {
    std::array<double, 3> c{};
    for (int k = 0; k < 3; ++k) {
      c[k] = kCategoryColor[static_cast<int>(s.kind)][k] + rng.uniform(-cfg.color_jitter, cfg.color_jitter);
    }
    colors.push_back(c);
  }
  sample.image = Tensor({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int o = owner[static_cast<std::size_t>(y) * w + x];
      const auto& c = o >= 0 ? colors[o] : bg;
      for (int k = 0; k < 3; ++k) {
        sample.image.at(k, y, x) = quantize(c[k] + rng.uniform(-cfg.pixel_noise, cfg.pixel_noise));
      }
    }
  }

  for (std::size_t i = 0; i < placed.size(); ++i) {
    Instance inst;
    inst.ordinal = static_cast<int>(i) + 1;
    inst.category = static_cast<int>(placed[i].kind);
    inst.mask = LabelMap(h, w);
    for (std::size_t p = 0; p < owner.size(); ++p) inst.mask.labels[p] = owner[p] == static_cast<int>(i);
    inst.box = *mask_bounds(inst.mask);
    sample.instances.push_back(std::move(inst));
  }
  sample.class_map = class_map_from_instances(sample.instances, h, w);
  return sample;
}

std::vector<DatasetSample> generate_samples(std::uint64_t seed, int count, const SynthConfig& cfg) {
  if (count < 1) throw ConfigError("synth: image count must be >= 1");
  std::vector<DatasetSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_sample(seed, i, cfg));
  return out;
}

}  // namespace biseg
