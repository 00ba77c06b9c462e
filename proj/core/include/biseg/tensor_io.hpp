#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "biseg/score_maps.hpp"
#include "biseg/tensor.hpp"

namespace biseg {

// ".ten" layout: "BTEN", u32 version = 1, u8 dtype = 1 (float32), u8 ndim,
// ndim x u32 dims, row-major float32 payload. All integers little-endian.
inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint8_t kTensorDtypeFloat32 = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// <stem>.ten holds the maps, <stem>.json the sidecar {"k", "stride", "num_categories"}.
void save_score_map_set(const std::filesystem::path& stem, const ScoreMapSet& set);
ScoreMapSet load_score_map_set(const std::filesystem::path& stem);

}  // namespace biseg
