#include <doctest.h>

#include <cmath>

#include "geoagent/errors.hpp"
#include "geoagent/nn/optimizer.hpp"
#include "geoagent/segnet.hpp"
#include "helpers.hpp"

using namespace geoagent;

namespace {

SegNetConfig small_cfg() {
  SegNetConfig c;
  c.classes = 4;
  c.widths = {4, 6, 6};
  c.fusion_channels = 6;
  return c;
}

double max_sum_error(const nn::Tensor& probs) {
  double worst = 0.0;
  for (int y = 0; y < probs.dim(1); ++y) {
    for (int x = 0; x < probs.dim(2); ++x) {
      double s = 0.0;
      for (int k = 0; k < probs.dim(0); ++k) s += probs.at(k, y, x);
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("context features are cropped by geographic footprint") {
  // Centered patch: the central 4x4 of an 8x8 map.
  const FeatureCrop mid = context_feature_crop({192, 192, 64, 64, 2}, 2, 8, 8, 8, {512, 512});
  CHECK(mid.r0 == 2);
  CHECK(mid.r1 == 6);
  CHECK(mid.c0 == 2);
  CHECK(mid.c1 == 6);

  // Window translated at the corner: the crop shifts but still covers the patch.
  const FeatureCrop corner = context_feature_crop({0, 0, 64, 64, 2}, 2, 8, 8, 8, {512, 512});
  CHECK(corner.r0 == 0);
  CHECK(corner.r1 == 4);
  const FeatureCrop far = context_feature_crop({448, 448, 64, 64, 2}, 2, 8, 8, 8, {512, 512});
  CHECK(far.r0 == 4);
  CHECK(far.c1 == 8);

  nn::Tensor f({2, 8, 8}, 1.5);
  const nn::Tensor crop = crop_context_features(f, {192, 192, 64, 64, 2}, 2, 8, {512, 512});
  const nn::Tensor up = nn::resize_bilinear(crop, 8, 8);
  for (double v : up.values()) CHECK(v == 1.5);
  CHECK_THROWS_AS(crop_context_features(f, {0, 0, 64, 64, 1}, 1, 8, {512, 512}), GeometryError);
}

TEST_CASE("scale 1 ignores the context input") {
  const SegNet net(small_cfg(), 3);
  nn::Rng rng(4);
  const Raster raster = testutil::random_raster(rng, 3, 96, 96);
  const PatchSpec p{32, 32, 32, 32, 1};
  const Raster local = extract_local(raster, p);
  const Raster junk = testutil::random_raster(rng, 3, 32, 32);
  const SegOutputs a = net.forward(local, nullptr, 1, p, {96, 96});
  const SegOutputs b = net.forward(local, &junk, 1, p, {96, 96});
  CHECK(a.final_probs.values() == b.final_probs.values());
  CHECK_FALSE(a.aux_context_probs.has_value());
  CHECK(max_sum_error(a.final_probs) < 1e-9);

  const Raster ctx = extract_context(raster, p, 3);
  const SegOutputs c = net.forward(local, &ctx, 3, p, {96, 96});
  REQUIRE(c.aux_context_probs.has_value());
  CHECK(max_sum_error(c.final_probs) < 1e-9);
  CHECK(max_sum_error(*c.aux_context_probs) < 1e-9);
  CHECK(c.final_probs.values() != a.final_probs.values());
  CHECK(net.forward(local, &ctx, 3, p, {96, 96}).final_probs.values() == c.final_probs.values());
}

TEST_CASE("loss terms") {
  SegNet net(small_cfg(), 5);
  for (nn::Parameter* prm : net.params().all()) std::fill(prm->value.values().begin(), prm->value.values().end(), 0.0);
  nn::Rng rng(6);
  const Raster raster = testutil::random_raster(rng, 3, 64, 64);
  const LabelMask labels = testutil::random_labels(rng, 64, 64, 4);
  const PatchSpec p{16, 16, 32, 32, 1};
  const Raster local = extract_local(raster, p);
  const LabelMask y = extract_local(labels, p);

  SegTrace t1;
  net.forward(local, nullptr, 1, p, {64, 64}, &t1);
  const SegLoss l1 = net.loss(t1, y, nullptr);
  CHECK(l1.terms() == 2);
  CHECK(l1.final_term == doctest::Approx(std::log(4.0)));
  CHECK(l1.aux_local_term == doctest::Approx(std::log(4.0)));

  SegTrace t2;
  const Raster ctx = extract_context(raster, p, 2);
  const LabelMask yc = extract_context_labels(labels, p, 2);
  net.forward(local, &ctx, 2, p, {64, 64}, &t2);
  const SegLoss l2 = net.loss(t2, y, &yc);
  CHECK(l2.terms() == 3);
  CHECK(l2.total == doctest::Approx(std::log(4.0) * 1.8));
}

TEST_CASE("a confident correct prediction has near-zero loss") {
  SegNet net(small_cfg(), 7);
  for (nn::Parameter* prm : net.params().all()) std::fill(prm->value.values().begin(), prm->value.values().end(), 0.0);
  // Every head's bias strongly favours class 2.
  for (const char* name : {"seg.classifier.bias", "seg.aux_local.bias"}) {
    nn::Parameter* b = net.params().find(name);
    REQUIRE(b != nullptr);
    b->value[2] = 40.0;
  }
  const PatchSpec p{0, 0, 16, 16, 1};
  const Raster local(3, 16, 16, 0.5);
  SegTrace t;
  net.forward(local, nullptr, 1, p, {32, 32}, &t);
  CHECK(net.loss(t, LabelMask(16, 16, 4, 2), nullptr).total < 1e-12);
}

TEST_CASE("both branches use one encoder") {
  SegNet net(small_cfg(), 8);
  int encoder_params = 0;
  for (const nn::Parameter* prm : net.params().all()) {
    CHECK(prm->name.rfind("seg.", 0) == 0);
    if (prm->name.find("encoder") != std::string::npos) ++encoder_params;
  }
  CHECK(encoder_params == 2 * 3);

  nn::Rng rng(9);
  const Raster raster = testutil::random_raster(rng, 3, 64, 64);
  const LabelMask labels = testutil::random_labels(rng, 64, 64, 4);
  const PatchSpec p{16, 16, 16, 16, 1};
  const Raster local = extract_local(raster, p);
  const SegOutputs before = net.forward(local, nullptr, 1, p, {64, 64});

  // A context-scale step that only touches the shared encoder.
  const Raster ctx = extract_context(raster, p, 2);
  const LabelMask yc = extract_context_labels(labels, p, 2);
  SegTrace t;
  net.forward(local, &ctx, 2, p, {64, 64}, &t);
  net.params().zero_grad();
  net.backward(t, extract_local(labels, p), &yc);
  for (nn::Parameter* prm : net.params().all()) {
    if (prm->name.find("encoder") == std::string::npos) std::fill(prm->value.grad().begin(), prm->value.grad().end(), 0.0);
  }
  nn::sgd_step(net.params().all(), {0.5, 0.0, 1.0, 0, 0.0}, 0);
  const SegOutputs after = net.forward(local, nullptr, 1, p, {64, 64});
  CHECK(after.final_probs.values() != before.final_probs.values());
}

TEST_CASE("constant input gives spatially constant probabilities") {
  const SegNet net(small_cfg(), 10);
  const Raster raster(3, 128, 128, 0.4);
  const PatchSpec p{32, 32, 32, 32, 1};
  const Raster local = extract_local(raster, p);
  const Raster ctx = extract_context(raster, p, 2);
  const SegOutputs o = net.forward(local, &ctx, 2, p, {128, 128});
  const nn::Tensor& f = o.final_probs;
  for (int k = 0; k < f.dim(0); ++k) {
    for (int y = 0; y < f.dim(1); ++y) {
      for (int x = 0; x < f.dim(2); ++x) CHECK(f.at(k, y, x) == doctest::Approx(f.at(k, 0, 0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("seeded construction is deterministic") {
  const SegNet a(small_cfg(), 11), b(small_cfg(), 11), c(small_cfg(), 12);
  CHECK(nn::checksum(a.params()) == nn::checksum(b.params()));
  CHECK(nn::checksum(a.params()) != nn::checksum(c.params()));
  SegNetConfig bad = small_cfg();
  CHECK_THROWS_AS(bad.validate(30, 32), ConfigError);
  bad.widths.clear();
  CHECK_THROWS_AS(bad.validate(32, 32), ConfigError);
}
