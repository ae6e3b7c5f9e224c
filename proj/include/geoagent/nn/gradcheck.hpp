#pragma once

#include <functional>
#include <span>
#include <string>

#include "geoagent/nn/tensor.hpp"

namespace geoagent::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_entry;
  std::size_t entries_checked = 0;
};

/// Evaluates the loss; when `backward` is true it must also accumulate
/// analytic gradients into the parameters (which the checker zeroes first).
using LossFunction = std::function<double(bool backward)>;

/// Compares analytic gradients with central differences, entry by entry.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6). `max_entries_per_param`
/// (0 = all) checks an evenly strided subset of each parameter.
GradCheckResult grad_check(std::span<Parameter* const> params, const LossFunction& loss,
                           double eps = 1e-5, std::size_t max_entries_per_param = 0);

}  // namespace geoagent::nn
