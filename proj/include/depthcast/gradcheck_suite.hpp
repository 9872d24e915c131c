#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthcast/gradcheck.hpp"

namespace depthcast {

struct GradCheckSuiteConfig {
  std::uint64_t seed = 0;
  GradCheckOptions options;
  /// Test hook: the analytic gradient of this kernel is doubled before the
  /// comparison. Empty for a normal run.
  std::string planted_bug;
  /// Kernels to run; empty runs all of them.
  std::vector<std::string> only;
};

struct KernelCheck {
  std::string kernel;
  GradCheckReport report;
  int redraws = 0;  // instances rejected because a probe straddled a kink
};

struct GradCheckSuiteReport {
  bool passed = true;
  std::vector<KernelCheck> kernels;
};

/// Names accepted by GradCheckSuiteConfig::only / planted_bug.
const std::vector<std::string>& gradcheck_kernel_names();

/// Random small instances (at most 16x16 images, k <= 4, d_model <= 16) for
/// every differentiable kernel. Throws std::invalid_argument on an unknown
/// kernel name.
GradCheckSuiteReport run_gradcheck_suite(const GradCheckSuiteConfig& cfg);

nlohmann::json to_json(const GradCheckSuiteReport& r);

}  // namespace depthcast
