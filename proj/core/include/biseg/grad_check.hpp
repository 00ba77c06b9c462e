#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace biseg {

inline constexpr double kGradCheckStep = 1e-3;
inline constexpr double kGradCheckTolerance = 1e-4;

// Max error over the checked coordinates of one input tensor of one scope.
// Error is |analytic - numeric| / max(1, |analytic|, |numeric|).
struct GradCheckGroup {
  std::string scope;
  std::string group;
  double max_rel_error = 0;
  int trials = 0;
  long checked = 0;
  long skipped = 0;  // coordinates whose +/- step crossed a relu kink or a max tie
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double seconds = 0;

  double max_error() const;
  bool passed(double tolerance = kGradCheckTolerance) const;
};

// conv2d relu softmax_channels upsample_x2 assemble fuse crop_prior
// bayes_combine mask_and_score loss_ss loss_cls loss_mask full-head
const std::vector<std::string>& gradcheck_scopes();

// Central differences in 64-bit against the analytic backward pass. `scope`
// is one of gradcheck_scopes() or "all"; anything else throws ConfigError.
GradCheckReport grad_check(std::string_view scope, int trials, std::uint64_t seed);

std::string gradcheck_report_json(const GradCheckReport& report);
std::string gradcheck_report_text(const GradCheckReport& report);

}  // namespace biseg
