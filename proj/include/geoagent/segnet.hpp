#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "geoagent/nn/encoder.hpp"
#include "geoagent/tiling.hpp"

namespace geoagent {

struct SegNetConfig {
  int in_channels = 3;
  int classes = 4;
  std::vector<int> widths = {16, 32, 64};
  int fusion_channels = 32;
  double aux_weight = 0.4;

  int stride() const { return 1 << widths.size(); }
  /// Throws ConfigError for bad widths or a patch not divisible by stride.
  void validate(int patch_h, int patch_w) const;
};

/// Rows [r0, r1) and cols [c0, c1) of the context feature map whose
/// footprints intersect the local patch.
struct FeatureCrop {
  int r0 = 0, r1 = 0, c0 = 0, c1 = 0;
};

/// Which cells of an fh x fw context feature map (stride `stride`,
/// context scale `scale`) cover patch p, accounting for the window's
/// translation near raster edges. Throws GeometryError on an empty crop.
FeatureCrop context_feature_crop(const PatchSpec& p, int scale, int stride, int fh, int fw,
                                 std::pair<int, int> raster_hw);

/// Crops f_c by geographic coordinates (see context_feature_crop).
nn::Tensor crop_context_features(const nn::Tensor& f_c, const PatchSpec& p, int scale, int stride,
                                 std::pair<int, int> raster_hw);

struct SegOutputs {
  nn::Tensor final_probs;                       // [K, h, w]
  nn::Tensor aux_local_probs;                   // [K, h, w]
  std::optional<nn::Tensor> aux_context_probs;  // [K, h, w] over the context footprint, a > 1 only
};

/// Everything the backward pass needs from one forward call.
struct SegTrace {
  int scale = 1;
  int patch_h = 0, patch_w = 0;
  nn::EncoderTrace enc_local, enc_context;
  nn::Tensor f_local, f_context;
  FeatureCrop crop;
  nn::Tensor context_up;  // cropped f_c resized to f_l's extent, or zeros
  nn::Tensor fused_in, fused;
  nn::Tensor logits_small, logits;
  nn::Tensor aux_local_small, aux_local_logits;
  nn::Tensor aux_context_small, aux_context_logits;
};

struct SegLoss {
  double total = 0.0;
  double final_term = 0.0;
  double aux_local_term = 0.0;
  std::optional<double> aux_context_term;
  int terms() const { return aux_context_term ? 3 : 2; }
};

/// Dual-branch segmenter: one shared encoder applied to the local patch and
/// to the downsampled context patch, context features cropped to the local
/// footprint and fused with a 3x3 convolution.
class SegNet {
 public:
  SegNet(const SegNetConfig& cfg, std::uint64_t seed);
  SegNet(SegNet&&) = default;
  SegNet& operator=(SegNet&&) = default;

  const SegNetConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  /// x_ctx is ignored when scale == 1 (context branch deactivated).
  SegOutputs forward(const Raster& x_loc, const Raster* x_ctx, int scale, const PatchSpec& p,
                     std::pair<int, int> raster_hw, SegTrace* trace = nullptr) const;

  /// CE(final) + aux*CE(aux_local) [+ aux*CE(aux_context, y_context)].
  SegLoss loss(const SegTrace& trace, const LabelMask& y_patch, const LabelMask* y_context) const;

  /// Same loss, with gradients accumulated into the parameters.
  SegLoss backward(const SegTrace& trace, const LabelMask& y_patch, const LabelMask* y_context);

  /// Single-branch prediction from the context input alone: the auxiliary
  /// context head, cropped to the local footprint and resized to h x w.
  /// With scale == 1 this is the auxiliary local head on x_ctx.
  nn::Tensor predict_context_only(const Raster& x_ctx, int scale, const PatchSpec& p,
                                  std::pair<int, int> raster_hw) const;

 private:
  SegNetConfig cfg_;
  nn::ParameterStore store_;
  nn::ConvEncoder encoder_;
  nn::Conv2d fuse_;
  nn::Conv2d classifier_;
  nn::Conv2d aux_local_;
  nn::Conv2d aux_context_;
};

/// Probability tensor [K, h, w] as a Raster with K channels.
Raster to_raster(const nn::Tensor& probs);

}  // namespace geoagent
