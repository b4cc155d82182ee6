#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lrlab/param_vector.hpp"

namespace lrlab {

enum class OptimizerMode { adamw, sgd };

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::adamw;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  std::vector<double> m;  // first moment
  std::vector<double> v;  // second moment
  std::int64_t step = 0;

  void reset(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
    step = 0;
  }
};

// Linear warmup to the peak rate, then cosine annealing to zero.
inline double lr_schedule(std::int64_t step, std::int64_t total_steps, double peak_lr,
                          double warmup_ratio) {
  if (step < 0 || step > total_steps) throw std::invalid_argument("lr_schedule: step range");
  const std::int64_t warmup =
      static_cast<std::int64_t>(std::ceil(warmup_ratio * double(total_steps)));
  if (step < warmup) return peak_lr * double(step) / double(warmup);
  if (total_steps == warmup) return peak_lr;
  const double progress = double(step - warmup) / double(total_steps - warmup);
  return peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// One decoupled-weight-decay adaptive step (bias-corrected), or plain SGD.
// Mutates params and state; caller has already checked grads are finite.
inline void optimizer_step(ParamVector& params, const ParamVector& grads,
                           OptimizerState& state, double lr, const OptimizerConfig& cfg) {
  if (!params.same_structure(grads))
    throw std::invalid_argument("optimizer_step: grad structure mismatch");
  const std::size_t n = params.size();
  if (cfg.mode == OptimizerMode::sgd) {
    for (std::size_t i = 0; i < n; ++i) params.values()[i] -= lr * grads.values()[i];
    ++state.step;
    return;
  }
  if (state.m.size() != n) state.reset(n);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values()[i];
    double& m = state.m[i];
    double& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    double& p = params.values()[i];
    p -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p);
  }
}

}  // namespace lrlab
