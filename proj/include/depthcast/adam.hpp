#pragma once

#include <cstdint>
#include <vector>

#include "depthcast/params.hpp"

namespace depthcast {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// From this (1-based) step on, lr is replaced by decayed_lr; < 0 disables.
  std::int64_t decay_step = -1;
  double decayed_lr = 1e-5;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
  /// Learning rate the next step will use.
  double current_lr() const;
};

/// Bias-corrected Adam update in place. Throws std::domain_error naming the
/// segment if any gradient is non-finite, before touching any state.
void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state);

}  // namespace depthcast
