#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace biseg {

// Interleaved 8- or 16-bit raster as stored in binary netpbm files.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 1;    // 1 (PGM) or 3 (PPM)
  int maxval = 255;    // 255 or 65535
  std::vector<std::uint16_t> samples;  // row-major, channels interleaved

  Raster() = default;
  Raster(int w, int h, int c, int max) : width(w), height(h), channels(c), maxval(max),
      samples(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint16_t& at(int y, int x, int c = 0) {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint16_t at(int y, int x, int c = 0) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// P6 (3 channels) or P5 (1 channel). 16-bit samples are written big-endian.
std::vector<std::uint8_t> encode_pnm(const Raster& r);
Raster decode_pnm(std::span<const std::uint8_t> bytes);

void write_pnm(const std::filesystem::path& path, const Raster& r);
Raster read_pnm(const std::filesystem::path& path);

// Whole-file helpers shared by the dataset and experiment code.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace biseg
