#include "geoagent/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace geoagent::nn {

GradCheckResult grad_check(std::span<Parameter* const> params, const LossFunction& loss, double eps,
                           std::size_t max_entries_per_param) {
  for (Parameter* p : params) p->value.zero_grad();
  loss(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->value.grad());

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    auto& v = p->value.values();
    const std::size_t n = v.size();
    const std::size_t stride =
        (max_entries_per_param == 0 || n <= max_entries_per_param) ? 1 : n / max_entries_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = v[i];
      v[i] = orig + eps;
      const double plus = loss(false);
      v[i] = orig - eps;
      const double minus = loss(false);
      v[i] = orig;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[pi][i];
      double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (!std::isfinite(rel)) rel = std::numeric_limits<double>::infinity();
      ++result.entries_checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = rel;
        result.worst_entry = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace geoagent::nn
