#pragma once

#include <cmath>
#include <span>

#include "rfadv/error.hpp"
#include "rfadv/nn/network.hpp"

namespace rfadv::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter of `net`.
template <typename T>
void adam_step(Network<T>& net, std::span<const T> grads, const AdamConfig& cfg = {}) {
  if (!(cfg.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  auto params = net.params();
  if (grads.size() != params.size()) throw ShapeError("gradient count does not match parameter count");
  auto& state = net.optimizer_state();
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), T{0});
    state.second_moment.assign(params.size(), T{0});
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * g * g;
    state.first_moment[i] = static_cast<T>(m);
    state.second_moment[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] = static_cast<T>(params[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

template <typename T>
void adam_step(Network<T>& net, const std::vector<T>& grads, const AdamConfig& cfg = {}) {
  adam_step(net, std::span<const T>(grads), cfg);
}

}  // namespace rfadv::nn
