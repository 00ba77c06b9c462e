#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "biseg/image_io.hpp"
#include "biseg/synth_data.hpp"

namespace biseg {

// Directory layout:
//   images/<id>.ppm     P6, 8-bit RGB
//   instances/<id>.pgm  P5, 16-bit, value = instance ordinal, 0 = background
//   classes/<id>.pgm    P5, 8-bit category ids
//   meta/<id>.json      {"instances": [{"ordinal", "category", "box": [x0,y0,x1,y1]}]}
//   manifest.json       {"ids", "config", "seed"}
struct Dataset {
  std::vector<DatasetSample> samples;
  SynthConfig config;
  std::uint64_t seed = 0;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

// generate_samples + write_dataset.
Dataset generate_dataset(const std::filesystem::path& dir, std::uint64_t seed, int count, const SynthConfig& cfg);

Tensor image_from_raster(const Raster& r);
Raster raster_from_image(const Tensor& image);

}  // namespace biseg
