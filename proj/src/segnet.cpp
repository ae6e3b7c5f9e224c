#include "geoagent/segnet.hpp"

#include <algorithm>
#include <string>

#include "geoagent/errors.hpp"

namespace geoagent {

void SegNetConfig::validate(int patch_h, int patch_w) const {
  if (classes < 2 || classes > 255) throw ConfigError("segnet: classes must be in [2, 255]");
  if (in_channels < 1) throw ConfigError("segnet: in_channels must be >= 1");
  if (widths.empty()) throw ConfigError("segnet: encoder needs at least one stage");
  for (int w : widths) {
    if (w < 1) throw ConfigError("segnet: encoder widths must be >= 1");
  }
  if (fusion_channels < 1) throw ConfigError("segnet: fusion channels must be >= 1");
  if (aux_weight < 0.0) throw ConfigError("segnet: aux weight must be >= 0");
  if (patch_h % stride() != 0 || patch_w % stride() != 0) {
    throw ConfigError("segnet: patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                      " not divisible by encoder stride " + std::to_string(stride()));
  }
}

FeatureCrop context_feature_crop(const PatchSpec& p, int scale, int stride, int fh, int fw,
                                 std::pair<int, int> raster_hw) {
  const ContextWindow cw = context_window(p, scale, raster_hw.first, raster_hw.second);
  // One feature cell spans stride*scale source pixels of the context window.
  const int cell = stride * scale;
  auto span = [cell](int offset, int size, int cells) {
    const int lo = std::max(0, offset / cell);
    const int hi = std::min(cells, (offset + size + cell - 1) / cell);
    return std::pair{lo, hi};
  };
  const auto [r0, r1] = span(p.row - cw.top, p.h, fh);
  const auto [c0, c1] = span(p.col - cw.left, p.w, fw);
  if (r1 <= r0 || c1 <= c0) {
    throw GeometryError("context crop for patch at (" + std::to_string(p.row) + "," +
                        std::to_string(p.col) + ") scale " + std::to_string(scale) + " is empty");
  }
  return {r0, r1, c0, c1};
}

nn::Tensor crop_context_features(const nn::Tensor& f_c, const PatchSpec& p, int scale, int stride,
                                 std::pair<int, int> raster_hw) {
  if (scale < 2) throw GeometryError("context crop requires scale >= 2");
  const FeatureCrop c = context_feature_crop(p, scale, stride, f_c.dim(1), f_c.dim(2), raster_hw);
  return nn::crop(f_c, c.r0, c.r1, c.c0, c.c1);
}

SegNet::SegNet(const SegNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  encoder_ = nn::ConvEncoder(store_, "seg.encoder", cfg.in_channels, cfg.widths, seed);
  const int C = encoder_.out_channels();
  fuse_ = nn::Conv2d::create(store_, "seg.fuse", 2 * C, cfg.fusion_channels, 3, 1, 1, seed);
  classifier_ = nn::Conv2d::create(store_, "seg.classifier", cfg.fusion_channels, cfg.classes, 1, 1, 0, seed);
  aux_local_ = nn::Conv2d::create(store_, "seg.aux_local", C, cfg.classes, 1, 1, 0, seed);
  aux_context_ = nn::Conv2d::create(store_, "seg.aux_context", C, cfg.classes, 1, 1, 0, seed);
}

SegOutputs SegNet::forward(const Raster& x_loc, const Raster* x_ctx, int scale, const PatchSpec& p,
                           std::pair<int, int> raster_hw, SegTrace* trace) const {
  if (scale < 1) throw DimensionError("segnet: scale must be >= 1");
  if (x_loc.height != p.h || x_loc.width != p.w || x_loc.channels != cfg_.in_channels) {
    throw DimensionError("segnet: local input does not match patch " + std::to_string(p.h) + "x" +
                         std::to_string(p.w));
  }
  const bool with_context = scale > 1;
  if (with_context && (x_ctx == nullptr || x_ctx->height != p.h || x_ctx->width != p.w ||
                       x_ctx->channels != cfg_.in_channels)) {
    throw DimensionError("segnet: scale > 1 needs a context input of the patch size");
  }

  SegTrace local_trace;
  SegTrace& t = trace ? *trace : local_trace;
  t = SegTrace{};
  t.scale = scale;
  t.patch_h = p.h;
  t.patch_w = p.w;

  t.f_local = encoder_.forward(nn::to_tensor(x_loc), &t.enc_local);
  const int C = t.f_local.dim(0), fh = t.f_local.dim(1), fw = t.f_local.dim(2);
  if (with_context) {
    t.f_context = encoder_.forward(nn::to_tensor(*x_ctx), &t.enc_context);
    t.crop = context_feature_crop(p, scale, encoder_.stride(), fh, fw, raster_hw);
    const nn::Tensor cropped = nn::crop(t.f_context, t.crop.r0, t.crop.r1, t.crop.c0, t.crop.c1);
    t.context_up = nn::resize_bilinear(cropped, fh, fw);
  } else {
    t.context_up = nn::Tensor({C, fh, fw});
  }
  t.fused_in = nn::concat_channels(t.f_local, t.context_up);
  t.fused = nn::relu(fuse_.forward(t.fused_in));
  t.logits_small = classifier_.forward(t.fused);
  t.logits = nn::resize_bilinear(t.logits_small, p.h, p.w);
  t.aux_local_small = aux_local_.forward(t.f_local);
  t.aux_local_logits = nn::resize_bilinear(t.aux_local_small, p.h, p.w);

  SegOutputs out;
  out.final_probs = nn::softmax(t.logits);
  out.aux_local_probs = nn::softmax(t.aux_local_logits);
  if (with_context) {
    t.aux_context_small = aux_context_.forward(t.f_context);
    t.aux_context_logits = nn::resize_bilinear(t.aux_context_small, p.h, p.w);
    out.aux_context_probs = nn::softmax(t.aux_context_logits);
  }
  return out;
}

SegLoss SegNet::loss(const SegTrace& t, const LabelMask& y_patch, const LabelMask* y_context) const {
  SegLoss l;
  l.final_term = nn::softmax_cross_entropy(t.logits, y_patch.data).loss;
  l.aux_local_term = nn::softmax_cross_entropy(t.aux_local_logits, y_patch.data).loss;
  l.total = l.final_term + cfg_.aux_weight * l.aux_local_term;
  if (t.scale > 1) {
    if (y_context == nullptr) throw DimensionError("segnet loss: scale > 1 needs context labels");
    l.aux_context_term = nn::softmax_cross_entropy(t.aux_context_logits, y_context->data).loss;
    l.total += cfg_.aux_weight * *l.aux_context_term;
  }
  return l;
}

SegLoss SegNet::backward(const SegTrace& t, const LabelMask& y_patch, const LabelMask* y_context) {
  SegLoss l;
  const int fh = t.f_local.dim(1), fw = t.f_local.dim(2);

  auto ce = nn::softmax_cross_entropy(t.logits, y_patch.data);
  l.final_term = ce.loss;
  nn::Tensor d_small = nn::resize_bilinear_backward(ce.dlogits, fh, fw);
  nn::Tensor d_fused = classifier_.backward(t.fused, d_small);
  d_fused = nn::relu_backward(t.fused, d_fused);
  nn::Tensor d_in = fuse_.backward(t.fused_in, d_fused);
  auto [d_local, d_context_up] = nn::split_channels(d_in, t.f_local.dim(0));

  auto ce_al = nn::softmax_cross_entropy(t.aux_local_logits, y_patch.data, cfg_.aux_weight);
  l.aux_local_term = ce_al.loss;
  nn::add_inplace(d_local, aux_local_.backward(
                               t.f_local, nn::resize_bilinear_backward(ce_al.dlogits, fh, fw)));
  l.total = l.final_term + cfg_.aux_weight * l.aux_local_term;

  // Both branches run through the same encoder weights, so each backward
  // accumulates into the same parameter gradients.
  encoder_.backward(t.enc_local, d_local);

  if (t.scale > 1) {
    if (y_context == nullptr) throw DimensionError("segnet backward: scale > 1 needs context labels");
    const int ch = t.crop.r1 - t.crop.r0, cw = t.crop.c1 - t.crop.c0;
    nn::Tensor d_context = nn::crop_backward(nn::resize_bilinear_backward(d_context_up, ch, cw),
                                             t.f_context.dim(1), t.f_context.dim(2), t.crop.r0, t.crop.c0);
    auto ce_ac = nn::softmax_cross_entropy(t.aux_context_logits, y_context->data, cfg_.aux_weight);
    l.aux_context_term = ce_ac.loss;
    l.total += cfg_.aux_weight * ce_ac.loss;
    nn::add_inplace(d_context, aux_context_.backward(
                                   t.f_context, nn::resize_bilinear_backward(ce_ac.dlogits, fh, fw)));
    encoder_.backward(t.enc_context, d_context);
  }
  return l;
}

nn::Tensor SegNet::predict_context_only(const Raster& x_ctx, int scale, const PatchSpec& p,
                                        std::pair<int, int> raster_hw) const {
  const nn::Tensor f = encoder_.forward(nn::to_tensor(x_ctx));
  if (scale == 1) return nn::softmax(nn::resize_bilinear(aux_local_.forward(f), p.h, p.w));
  const nn::Tensor logits = aux_context_.forward(f);
  const FeatureCrop c = context_feature_crop(p, scale, encoder_.stride(), f.dim(1), f.dim(2), raster_hw);
  return nn::softmax(nn::resize_bilinear(nn::crop(logits, c.r0, c.r1, c.c0, c.c1), p.h, p.w));
}

Raster to_raster(const nn::Tensor& probs) {
  Raster r(probs.dim(0), probs.dim(1), probs.dim(2));
  r.data = probs.values();
  return r;
}

}  // namespace geoagent
