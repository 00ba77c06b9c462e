#include "biseg/image_io.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <span>
#include <string>

#include "biseg/errors.hpp"

namespace biseg {

std::vector<std::uint8_t> encode_pnm(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw DataError("pnm: channels must be 1 or 3");
  if (r.maxval < 1 || r.maxval > 65535) throw DataError("pnm: maxval out of range");
  const std::string header = std::string(r.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(r.width) + " " + std::to_string(r.height) + "\n" +
                             std::to_string(r.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = r.maxval > 255;
  out.reserve(out.size() + r.samples.size() * (wide ? 2 : 1));
  for (std::uint16_t v : r.samples) {
    if (v > r.maxval) throw DataError("pnm: sample exceeds maxval");
    if (wide) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  return out;
}

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> b) : b_(b) {}

  int number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) {
      throw DataError(std::string("pnm: expected ") + field + " at byte " + std::to_string(pos_));
    }
    long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_++] - '0');
      if (v > 1 << 24) throw DataError(std::string("pnm: ") + field + " too large");
    }
    return static_cast<int>(v);
  }
  void single_whitespace() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw DataError("pnm: malformed header terminator");
    ++pos_;
  }
  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 2;
};

}  // namespace

Raster decode_pnm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw DataError("pnm: unsupported magic (expected P5 or P6)");
  }
  HeaderParser p(bytes);
  Raster r;
  r.channels = bytes[1] == '6' ? 3 : 1;
  r.width = p.number("width");
  r.height = p.number("height");
  r.maxval = p.number("maxval");
  p.single_whitespace();
  if (r.width <= 0 || r.height <= 0) throw DataError("pnm: non-positive dimensions");
  if (r.maxval < 1 || r.maxval > 65535) throw DataError("pnm: maxval out of range");
  const bool wide = r.maxval > 255;
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
  const std::size_t need = n * (wide ? 2 : 1);
  if (bytes.size() - p.pos() < need) throw DataError("pnm: truncated pixel data");
  r.samples.resize(n);
  const std::uint8_t* d = bytes.data() + p.pos();
  for (std::size_t i = 0; i < n; ++i) {
    r.samples[i] = wide ? static_cast<std::uint16_t>((d[2 * i] << 8) | d[2 * i + 1]) : d[i];
  }
  return r;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto b = read_file_bytes(path);
  return {b.begin(), b.end()};
}

void write_pnm(const std::filesystem::path& path, const Raster& r) { write_file_bytes(path, encode_pnm(r)); }

Raster read_pnm(const std::filesystem::path& path) {
  try {
    return decode_pnm(read_file_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace biseg
