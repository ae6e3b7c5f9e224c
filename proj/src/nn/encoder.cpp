#include "geoagent/nn/encoder.hpp"

#include "geoagent/tiling.hpp"

namespace geoagent::nn {

ConvEncoder::ConvEncoder(ParameterStore& store, const std::string& prefix, int in_channels,
                         const std::vector<int>& widths, std::uint64_t seed) {
  int in = in_channels;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    convs_.push_back(Conv2d::create(store, prefix + ".conv" + std::to_string(i + 1), in, widths[i], 3, 2, 1, seed));
    in = widths[i];
  }
}

Tensor ConvEncoder::forward(const Tensor& x, EncoderTrace* trace) const {
  Tensor h = x;
  if (trace) {
    trace->inputs.clear();
    trace->outputs.clear();
  }
  for (const Conv2d& conv : convs_) {
    Tensor y = relu(conv.forward(h));
    if (trace) {
      trace->inputs.push_back(std::move(h));
      trace->outputs.push_back(y);
    }
    h = std::move(y);
  }
  return h;
}

Tensor ConvEncoder::backward(const EncoderTrace& trace, const Tensor& dy, bool need_dx) const {
  Tensor g = dy;
  for (std::size_t i = convs_.size(); i-- > 0;) {
    g = relu_backward(trace.outputs[i], g);
    const bool want = need_dx || i > 0;
    g = convs_[i].backward(trace.inputs[i], g, want);
  }
  return need_dx ? g : Tensor{};
}

Tensor to_tensor(const Raster& raster) {
  Tensor t({raster.channels, raster.height, raster.width});
  t.values() = raster.data;
  return t;
}

}  // namespace geoagent::nn
