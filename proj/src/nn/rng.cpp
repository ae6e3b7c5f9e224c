#include "geoagent/nn/rng.hpp"

#include <sstream>

#include "geoagent/errors.hpp"

namespace geoagent::nn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int uniform_int(Rng& rng, int lo, int hi) {
  const std::uint64_t span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo) + 1;
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % span + 1) % span;
  std::uint64_t v;
  do {
    v = rng();
  } while (v > limit);
  return lo + static_cast<int>(v % span);
}

int sample_categorical(Rng& rng, std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

std::string save_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void load_rng(Rng& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw IoError("corrupt random stream state");
}

}  // namespace geoagent::nn
