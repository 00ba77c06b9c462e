#include "biseg/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <nlohmann/json.hpp>

#include "biseg/image_io.hpp"

namespace biseg {
namespace {

constexpr char kMagic[4] = {'B', 'T', 'E', 'N'};
constexpr std::size_t kMaxNdim = 255;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(FormatError::Kind::kTruncated,
                        std::string("tensor file truncated while reading ") + what + " at byte " +
                            std::to_string(pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(10 + 4 * t.ndim() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kTensorFileVersion);
  out.push_back(kTensorDtypeFloat32);
  if (t.ndim() > kMaxNdim) throw ShapeError("tensor rank exceeds 255");
  out.push_back(static_cast<std::uint8_t>(t.ndim()));
  for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "not a tensor file: bad magic bytes (expected BTEN)");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kTensorFileVersion) {
    throw FormatError(FormatError::Kind::kBadVersion,
                      "unsupported tensor file version " + std::to_string(version));
  }
  const std::uint8_t dtype = r.u8("dtype");
  if (dtype != kTensorDtypeFloat32) {
    throw FormatError(FormatError::Kind::kBadDtype, "unsupported tensor dtype " + std::to_string(dtype));
  }
  const std::uint8_t ndim = r.u8("ndim");
  Shape shape;
  std::uint64_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    const std::uint32_t d = r.u32("dimensions");
    if (d == 0 || d > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
      throw FormatError(FormatError::Kind::kDimensionOverflow,
                        "tensor dimension " + std::to_string(i) + " has invalid extent " + std::to_string(d));
    }
    if (count > (std::numeric_limits<std::uint64_t>::max() / 4) / d) {
      throw FormatError(FormatError::Kind::kDimensionOverflow,
                        "tensor element count overflows at dimension " + std::to_string(i));
    }
    count *= d;
    shape.push_back(static_cast<int>(d));
  }
  if (count * 4 > r.remaining()) {
    throw FormatError(FormatError::Kind::kTruncated,
                      "tensor file truncated: payload needs " + std::to_string(count * 4) + " bytes, " +
                          std::to_string(r.remaining()) + " available");
  }
  auto payload = r.take(static_cast<std::size_t>(count * 4), "payload");
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::kTrailingBytes,
                      std::to_string(r.remaining()) + " trailing bytes after tensor payload");
  }
  std::vector<float> data(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
    data[i] = std::bit_cast<float>(v);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

namespace {

std::filesystem::path with_ext(std::filesystem::path p, const char* ext) { return p.replace_extension(ext); }

}  // namespace

void save_score_map_set(const std::filesystem::path& stem, const ScoreMapSet& set) {
  set.validate();
  save_tensor(with_ext(stem, ".ten"), set.maps);
  nlohmann::ordered_json j;
  j["k"] = set.k;
  j["stride"] = set.stride;
  j["num_categories"] = set.num_categories;
  write_text_file(with_ext(stem, ".json"), j.dump(2) + "\n");
}

ScoreMapSet load_score_map_set(const std::filesystem::path& stem) {
  const auto side = with_ext(stem, ".json");
  ScoreMapSet set;
  try {
    const auto j = nlohmann::json::parse(read_text_file(side));
    set.k = j.at("k").get<int>();
    set.stride = j.at("stride").get<int>();
    set.num_categories = j.at("num_categories").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(side.string() + ": bad score-map sidecar: " + e.what());
  }
  set.maps = load_tensor(with_ext(stem, ".ten"));
  set.validate();
  return set;
}

}  // namespace biseg
