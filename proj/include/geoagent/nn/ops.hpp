#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "geoagent/nn/tensor.hpp"

// Differentiable primitives over [C, H, W] feature maps and [N] vectors.
// Each forward has a matching backward that takes the forward's input (or
// output, where cheaper) plus the upstream gradient, accumulates parameter
// gradients into Parameter::value.grad(), and returns the input gradient.
namespace geoagent::nn {

/// Uniform in +-gain*sqrt(6/fan_in), drawn from the parameter's own stream.
void he_uniform(Parameter& p, int fan_in, std::uint64_t seed, double gain = 1.0);

struct Conv2d {
  Parameter* weight = nullptr;  // [out, in, k, k]
  Parameter* bias = nullptr;    // [out]
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;  // edge-replicated

  static Conv2d create(ParameterStore& store, const std::string& name, int in, int out, int kernel,
                       int stride, int pad, std::uint64_t seed, double gain = 1.0);

  int out_extent(int n) const { return (n + 2 * pad - kernel) / stride + 1; }
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_dx = true) const;
};

struct Dense {
  Parameter* weight = nullptr;  // [out, in]
  Parameter* bias = nullptr;    // [out]
  int in_features = 0;
  int out_features = 0;

  static Dense create(ParameterStore& store, const std::string& name, int in, int out,
                      std::uint64_t seed, double gain = 1.0);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy, bool need_dx = true) const;
};

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& y, const Tensor& dy);

/// Half-pixel-centred bilinear resize (edge samples clamped).
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear_backward(const Tensor& dy, int in_h, int in_w);

Tensor upsample_nearest(const Tensor& x, int factor);
Tensor upsample_nearest_backward(const Tensor& dy, int factor);

/// [C, H, W] -> [C]
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& dy, int h, int w);

/// Zeroes every position whose mask entry is 0. Self-adjoint.
Tensor apply_mask(const Tensor& x, std::span<const std::uint8_t> mask);

/// Average over the masked positions only (divides by the masked count).
Tensor masked_avg_pool(const Tensor& x, std::span<const std::uint8_t> mask);
Tensor masked_avg_pool_backward(const Tensor& dy, std::span<const std::uint8_t> mask, int h, int w);

/// Softmax over dimension 0 at every remaining position.
Tensor softmax(const Tensor& logits);

struct CrossEntropy {
  double loss = 0.0;
  Tensor dlogits;
};

/// Mean per-position cross-entropy of softmax(logits) against class labels;
/// dlogits is the gradient of that mean, scaled by `weight`.
CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels,
                                   double weight = 1.0);

Tensor concat_channels(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int first_channels);

/// Rows [r0, r1) and cols [c0, c1) of every channel.
Tensor crop(const Tensor& x, int r0, int r1, int c0, int c1);
Tensor crop_backward(const Tensor& dy, int full_h, int full_w, int r0, int c0);

void add_inplace(Tensor& acc, const Tensor& x);

}  // namespace geoagent::nn
