#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "geoagent/nn/tensor.hpp"

namespace geoagent::nn {

// Checkpoint file: "GACK", u16 version, u32 entry count, then per entry a
// u32 name length, UTF-8 name, u8 rank, u32 dims and an f64 payload. All
// integers and floats little-endian.
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};

using Checkpoint = std::vector<NamedTensor>;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic: written beside the target, then renamed over it.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameter values, or momentum buffers under "<name>#momentum".
Checkpoint snapshot(const ParameterStore& store, bool with_momentum = false);

/// Copies matching entries into the store. Every parameter must be present
/// with identical dims; entries for other networks are ignored.
void restore(ParameterStore& store, const Checkpoint& ckpt, bool with_momentum = false);

}  // namespace geoagent::nn
