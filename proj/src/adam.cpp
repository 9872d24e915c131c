#include "depthcast/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace depthcast {

double AdamState::current_lr() const {
  if (config.decay_step >= 0 && step + 1 >= config.decay_step) return config.decayed_lr;
  return config.lr;
}

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter and gradient sizes differ");
  const auto g = grads.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw std::domain_error("adam_step: non-finite gradient in segment '" + params.segment_of(i) + "'");
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: optimizer state size mismatch");

  const double lr = state.current_lr();
  state.step += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  auto p = params.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g[i];
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace depthcast
