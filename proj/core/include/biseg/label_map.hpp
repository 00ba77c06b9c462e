#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "biseg/errors.hpp"

namespace biseg {

// Per-pixel small integer labels: category ids, or 0/1 for binary masks.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return labels.size(); }
  std::size_t count(std::uint8_t v) const {
    std::size_t n = 0;
    for (auto l : labels) n += l == v;
    return n;
  }
  bool operator==(const LabelMap&) const = default;
};

inline void require_same_dims(const LabelMap& a, const LabelMap& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": map dimensions " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

}  // namespace biseg
