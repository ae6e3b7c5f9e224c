#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geoagent/nn/gradcheck.hpp"

namespace geoagent {

struct GradSuiteEntry {
  std::string name;
  nn::GradCheckResult result;
};

/// Finite-difference checks of every primitive and of small segmenter and
/// agent networks, all in f64.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed);

}  // namespace geoagent
