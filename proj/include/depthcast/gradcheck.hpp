#pragma once

#include <functional>
#include <string>
#include <vector>

#include "depthcast/params.hpp"

namespace depthcast {

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-4;
  /// Entries whose finite-difference magnitude is below this are compared
  /// absolutely against it.
  double abs_floor = 1e-6;
  /// Cap on listed failures in the report.
  std::size_t max_failures_listed = 20;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::string worst;  // "segment[index]" of the largest error
  std::size_t checked = 0;
  std::vector<std::string> failing;
};

/// Central differences of f along every coordinate of `point`, compared with
/// `analytic` (same layout). Relative error is |a - n| / max(|n|, abs_floor).
GradCheckReport finite_diff_check(const std::function<double(const ParamVector&)>& f, const ParamVector& analytic,
                                  const ParamVector& point, const GradCheckOptions& opts = {});

}  // namespace depthcast
