#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace geoagent::nn {

// std::mt19937_64 output is fixed by the standard; the distribution helpers
// below are ours so sequences do not depend on the standard library vendor.
using Rng = std::mt19937_64;

/// Seed for a named stream derived from a run seed.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);

inline Rng make_stream(std::uint64_t seed, std::string_view name) { return Rng(stream_seed(seed, name)); }

/// Uniform in [0, 1) with 53 random bits.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);

/// Uniform integer in [lo, hi] by rejection.
int uniform_int(Rng& rng, int lo, int hi);

/// Index drawn with probability proportional to probs[i].
int sample_categorical(Rng& rng, std::span<const double> probs);

std::string save_rng(const Rng& rng);
void load_rng(Rng& rng, const std::string& text);

}  // namespace geoagent::nn
