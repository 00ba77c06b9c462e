#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "biseg/rng.hpp"
#include "biseg/score_maps.hpp"

namespace biseg {

enum class ProposalMode { kJitterGt, kFile, kGrid };

ProposalMode proposal_mode_by_name(std::string_view name);
std::string_view proposal_mode_name(ProposalMode mode);

// Ground-truth jitter: the center moves by up to `shift` of the box size per
// axis and each side is scaled by a factor in [scale_lo, scale_hi]. The
// remaining share of proposals are uniform random boxes (objectness 0).
struct JitterSpec {
  double shift = 0.2;
  double scale_lo = 0.7;
  double scale_hi = 1.4;
  double gt_fraction = 0.75;
  int negative_min_size = 16;
  int negative_max_size = 48;

  bool operator==(const JitterSpec&) const = default;
};

std::vector<Roi> propose_jitter(const std::vector<Roi>& gt_boxes, int count, const JitterSpec& spec, int width,
                                int height, Rng& rng);

// Sliding square windows of sides {16, 32, 48} at half-side steps, truncated to `count`.
std::vector<Roi> propose_grid(int width, int height, int count);

// CSV "image_id,x0,y0,x1,y1,objectness" with a required header line.
using ProposalTable = std::map<std::string, std::vector<Roi>>;

ProposalTable parse_proposal_csv(std::string_view text, const std::string& source = "<memory>");
std::string format_proposal_csv(const ProposalTable& table);
ProposalTable read_proposal_csv(const std::filesystem::path& path);

}  // namespace biseg
