#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geoagent/nn/ops.hpp"
#include "geoagent/tiling.hpp"

namespace geoagent::nn {

struct EncoderTrace {
  std::vector<Tensor> inputs;   // input of each stage
  std::vector<Tensor> outputs;  // post-ReLU output of each stage
};

/// Stack of 3x3 stride-2 convolutions, each followed by ReLU. Total stride
/// is 2^stages.
class ConvEncoder {
 public:
  ConvEncoder() = default;
  ConvEncoder(ParameterStore& store, const std::string& prefix, int in_channels,
              const std::vector<int>& widths, std::uint64_t seed);

  Tensor forward(const Tensor& x, EncoderTrace* trace = nullptr) const;
  /// Accumulates parameter gradients; returns the input gradient if asked.
  Tensor backward(const EncoderTrace& trace, const Tensor& dy, bool need_dx = false) const;

  int stride() const { return 1 << convs_.size(); }
  int out_channels() const { return convs_.empty() ? 0 : convs_.back().out_channels; }

 private:
  std::vector<Conv2d> convs_;
};

Tensor to_tensor(const Raster& raster);

}  // namespace geoagent::nn
