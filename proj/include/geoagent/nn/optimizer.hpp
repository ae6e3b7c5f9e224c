#pragma once

#include <cstdint>
#include <span>

#include "geoagent/nn/tensor.hpp"

namespace geoagent::nn {

struct OptimizerConfig {
  double lr = 0.001;
  double momentum = 0.9;
  // lr is multiplied by `decay` once every `decay_every` steps (0 = never).
  double decay = 1.0;
  std::int64_t decay_every = 0;
  // Global L2 gradient clip before the update (0 = off).
  double max_grad_norm = 0.0;

  void validate() const;
};

double effective_lr(const OptimizerConfig& cfg, std::int64_t step);

/// Scales all gradients so their joint L2 norm is at most max_norm; returns
/// the norm before scaling.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

/// Classical momentum: v = mu*v + g; p -= lr(step)*v.
void sgd_step(std::span<Parameter* const> params, const OptimizerConfig& cfg, std::int64_t step);

}  // namespace geoagent::nn
