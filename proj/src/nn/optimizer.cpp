#include "geoagent/nn/optimizer.hpp"

#include <cmath>

#include "geoagent/errors.hpp"

namespace geoagent::nn {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("optimizer: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("optimizer: momentum must be in [0,1)");
  if (!(decay > 0.0)) throw ConfigError("optimizer: decay must be > 0");
  if (decay_every < 0) throw ConfigError("optimizer: decay_every must be >= 0");
  if (max_grad_norm < 0.0) throw ConfigError("optimizer: max_grad_norm must be >= 0");
}

double effective_lr(const OptimizerConfig& cfg, std::int64_t step) {
  if (cfg.decay_every <= 0 || cfg.decay == 1.0) return cfg.lr;
  return cfg.lr * std::pow(cfg.decay, static_cast<double>(step / cfg.decay_every));
}

double clip_grad_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (Parameter* p : params) {
    for (double g : p->value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->value.grad()) g *= s;
    }
  }
  return norm;
}

void sgd_step(std::span<Parameter* const> params, const OptimizerConfig& cfg, std::int64_t step) {
  if (cfg.max_grad_norm > 0.0) clip_grad_norm(params, cfg.max_grad_norm);
  const double lr = effective_lr(cfg, step);
  for (Parameter* p : params) {
    auto& v = p->value.values();
    const auto& g = p->value.grad();
    if (p->momentum.size() != v.size()) p->momentum.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      p->momentum[i] = cfg.momentum * p->momentum[i] + g[i];
      v[i] -= lr * p->momentum[i];
    }
  }
}

}  // namespace geoagent::nn
