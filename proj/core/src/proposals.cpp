#include "biseg/proposals.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "biseg/image_io.hpp"

namespace biseg {

ProposalMode proposal_mode_by_name(std::string_view name) {
  if (name == "jitter-gt") return ProposalMode::kJitterGt;
  if (name == "file") return ProposalMode::kFile;
  if (name == "grid") return ProposalMode::kGrid;
  throw ConfigError("unknown proposal mode '" + std::string(name) + "' (expected jitter-gt, file or grid)");
}

std::string_view proposal_mode_name(ProposalMode mode) {
  switch (mode) {
    case ProposalMode::kJitterGt: return "jitter-gt";
    case ProposalMode::kFile: return "file";
    case ProposalMode::kGrid: return "grid";
  }
  return "?";
}

std::vector<Roi> propose_jitter(const std::vector<Roi>& gt_boxes, int count, const JitterSpec& spec, int width,
                                int height, Rng& rng) {
  std::vector<Roi> out;
  if (count <= 0) return out;
  out.reserve(static_cast<std::size_t>(count));
  const int from_gt = gt_boxes.empty() ? 0 : static_cast<int>(std::lround(count * spec.gt_fraction));
  for (int i = 0; i < from_gt; ++i) {
    const Roi& g = gt_boxes[static_cast<std::size_t>(i) % gt_boxes.size()];
    const double w = g.width();
    const double h = g.height();
    const double cx = (g.x0 + g.x1) / 2.0 + rng.uniform(-spec.shift, spec.shift) * w;
    const double cy = (g.y0 + g.y1) / 2.0 + rng.uniform(-spec.shift, spec.shift) * h;
    const double nw = w * rng.uniform(spec.scale_lo, spec.scale_hi);
    const double nh = h * rng.uniform(spec.scale_lo, spec.scale_hi);
    Roi r;
    r.x0 = static_cast<float>(cx - nw / 2);
    r.x1 = static_cast<float>(cx + nw / 2);
    r.y0 = static_cast<float>(cy - nh / 2);
    r.y1 = static_cast<float>(cy + nh / 2);
    r.objectness = 1.0f;
    out.push_back(r);
  }
  const int lo = std::min(spec.negative_min_size, std::min(width, height));
  const int hi = std::max(lo, std::min(spec.negative_max_size, std::min(width, height)));
  for (int i = from_gt; i < count; ++i) {
    const double w = rng.uniform(lo, hi);
    const double h = rng.uniform(lo, hi);
    Roi r;
    r.x0 = static_cast<float>(rng.uniform(0, width - w));
    r.y0 = static_cast<float>(rng.uniform(0, height - h));
    r.x1 = static_cast<float>(r.x0 + w);
    r.y1 = static_cast<float>(r.y0 + h);
    r.objectness = 0.0f;
    out.push_back(r);
  }
  return out;
}

std::vector<Roi> propose_grid(int width, int height, int count) {
  std::vector<Roi> out;
  for (int side : {16, 32, 48}) {
    if (side > width || side > height) continue;
    const int step = side / 2;
    for (int y = 0; y + side <= height; y += step) {
      for (int x = 0; x + side <= width; x += step) {
        if (static_cast<int>(out.size()) >= count) return out;
        out.push_back(Roi{static_cast<float>(x), static_cast<float>(y), static_cast<float>(x + side),
                          static_cast<float>(y + side), 0.0f});
      }
    }
  }
  return out;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

float parse_float(std::string_view s, const std::string& where, const char* field) {
  s = trim(s);
  float v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError(where + ": field " + field + " is not a number: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

ProposalTable parse_proposal_csv(std::string_view text, const std::string& source) {
  ProposalTable table;
  std::size_t pos = 0;
  int line_no = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto fields = split_fields(line);
    if (!saw_header) {
      const char* expected[] = {"image_id", "x0", "y0", "x1", "y1", "objectness"};
      bool ok = fields.size() == 6;
      for (std::size_t i = 0; ok && i < 6; ++i) ok = trim(fields[i]) == expected[i];
      if (!ok) throw DataError(where + ": expected header 'image_id,x0,y0,x1,y1,objectness'");
      saw_header = true;
      continue;
    }
    if (fields.size() != 6) {
      throw DataError(where + ": expected 6 fields, found " + std::to_string(fields.size()));
    }
    const std::string id(trim(fields[0]));
    if (id.empty()) throw DataError(where + ": empty image_id");
    Roi r{parse_float(fields[1], where, "x0"), parse_float(fields[2], where, "y0"),
          parse_float(fields[3], where, "x1"), parse_float(fields[4], where, "y1"),
          parse_float(fields[5], where, "objectness")};
    if (!(r.x1 > r.x0) || !(r.y1 > r.y0)) throw DataError(where + ": box must satisfy x1 > x0 and y1 > y0");
    table[id].push_back(r);
  }
  if (!saw_header) throw DataError(source + ": missing header line");
  return table;
}

std::string format_proposal_csv(const ProposalTable& table) {
  std::ostringstream os;
  os << "image_id,x0,y0,x1,y1,objectness\n";
  os.precision(9);
  for (const auto& [id, rois] : table) {
    for (const Roi& r : rois) {
      os << id << ',' << r.x0 << ',' << r.y0 << ',' << r.x1 << ',' << r.y1 << ',' << r.objectness << '\n';
    }
  }
  return os.str();
}

ProposalTable read_proposal_csv(const std::filesystem::path& path) {
  return parse_proposal_csv(read_text_file(path), path.string());
}

}  // namespace biseg
