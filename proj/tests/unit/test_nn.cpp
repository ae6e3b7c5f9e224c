#include <doctest.h>

#include <cmath>

#include "geoagent/errors.hpp"
#include "geoagent/gradsuite.hpp"
#include "geoagent/nn/checkpoint.hpp"
#include "geoagent/nn/encoder.hpp"
#include "geoagent/nn/gradcheck.hpp"
#include "geoagent/nn/ops.hpp"
#include "geoagent/nn/optimizer.hpp"
#include "geoagent/nn/rng.hpp"
#include "helpers.hpp"

using namespace geoagent;
using namespace geoagent::nn;

namespace {
Tensor random_tensor(Rng& rng, std::vector<int> dims) {
  Tensor t(std::move(dims));
  for (double& v : t.values()) v = uniform(rng, -1.0, 1.0);
  return t;
}
}  // namespace

TEST_CASE("named streams are stable and distinct") {
  CHECK(stream_seed(1, "a") == stream_seed(1, "a"));
  CHECK(stream_seed(1, "a") != stream_seed(1, "b"));
  CHECK(stream_seed(1, "a") != stream_seed(2, "a"));

  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const int v = uniform_int(rng, -3, 5);
    REQUIRE(v >= -3);
    REQUIRE(v <= 5);
    const double u = uniform01(rng);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  const std::vector<double> probs = {0.0, 1.0, 0.0};
  CHECK(sample_categorical(rng, probs) == 1);

  Rng a(99);
  uniform01(a);
  Rng b;
  load_rng(b, save_rng(a));
  CHECK(a() == b());
  CHECK_THROWS_AS(load_rng(b, "not a state"), IoError);
}

TEST_CASE("identity 1x1 convolution") {
  ParameterStore store;
  Conv2d conv = Conv2d::create(store, "c", 2, 2, 1, 1, 0, 1);
  std::fill(conv.weight->value.values().begin(), conv.weight->value.values().end(), 0.0);
  conv.weight->value[0] = 1.0;
  conv.weight->value[3] = 1.0;
  std::fill(conv.bias->value.values().begin(), conv.bias->value.values().end(), 0.0);
  Rng rng(1);
  const Tensor x = random_tensor(rng, {2, 5, 4});
  CHECK(conv.forward(x).values() == x.values());
}

TEST_CASE("padding replicates the border") {
  ParameterStore store;
  const Conv2d conv = Conv2d::create(store, "c", 1, 1, 3, 2, 1, 1);
  std::fill(conv.weight->value.values().begin(), conv.weight->value.values().end(), 1.0);
  const Tensor y = conv.forward(Tensor({1, 5, 6}, 0.5));
  CHECK(y.dim(1) == 3);
  CHECK(y.dim(2) == 3);
  for (double v : y.values()) CHECK(v == doctest::Approx(4.5));
}

TEST_CASE("softmax and cross-entropy closed forms") {
  Tensor logits({2, 1, 1}, 0.0);
  const std::vector<std::uint8_t> label = {0};
  const CrossEntropy ce = softmax_cross_entropy(logits, label);
  CHECK(ce.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  Rng rng(2);
  const Tensor z = random_tensor(rng, {4, 3, 5});
  const Tensor p = softmax(z);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 5; ++x) {
      double s = 0.0;
      for (int c = 0; c < 4; ++c) s += p.at(c, y, x);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  std::vector<std::uint8_t> labels(15);
  for (auto& l : labels) l = static_cast<std::uint8_t>(uniform_int(rng, 0, 3));
  CHECK(softmax_cross_entropy(z, labels).loss >= 0.0);
}

TEST_CASE("global and masked average pooling") {
  Tensor c({1, 3, 4}, 2.5);
  CHECK(global_avg_pool(c)[0] == doctest::Approx(2.5));
  const Tensor g = global_avg_pool_backward(Tensor({1}, 1.0), 3, 4);
  for (double v : g.values()) CHECK(v == doctest::Approx(1.0 / 12.0));

  Tensor f({1, 2, 2});
  f.values() = {1, 2, 3, 4};
  const std::vector<std::uint8_t> top = {1, 1, 0, 0};
  CHECK(masked_avg_pool(f, top)[0] == 1.5);
  const std::vector<std::uint8_t> all = {1, 1, 1, 1};
  CHECK(masked_avg_pool(f, all)[0] == global_avg_pool(f)[0]);
  const std::vector<std::uint8_t> none = {0, 0, 0, 0};
  CHECK_THROWS_AS(masked_avg_pool(f, none), GeometryError);
}

TEST_CASE("bilinear resize of a constant map is constant") {
  Tensor c({2, 3, 3}, 0.7);
  const Tensor up = resize_bilinear(c, 8, 5);
  for (double v : up.values()) CHECK(v == doctest::Approx(0.7));
  Rng rng(3);
  const Tensor x = random_tensor(rng, {1, 4, 4});
  CHECK(resize_bilinear(x, 4, 4).values() == x.values());
}

TEST_CASE("sgd with momentum and decay") {
  ParameterStore store;
  Parameter& p = store.add("p", {2});
  p.value.values() = {1.0, -1.0};
  OptimizerConfig cfg{0.1, 0.0, 1.0, 0, 0.0};
  std::vector<Parameter*> ps = {&p};
  sgd_step(ps, cfg, 0);
  CHECK(p.value.values() == std::vector<double>{1.0, -1.0});

  p.value.grad() = {1.0, 1.0};
  sgd_step(ps, cfg, 0);
  CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-15));

  OptimizerConfig decay{1.0, 0.9, 0.5, 10, 0.0};
  CHECK(effective_lr(decay, 9) == 1.0);
  CHECK(effective_lr(decay, 10) == 0.5);
  CHECK(effective_lr(decay, 25) == 0.25);

  OptimizerConfig mom{0.1, 0.9, 1.0, 0, 0.0};
  ParameterStore s2;
  Parameter& q = s2.add("q", {1});
  std::vector<Parameter*> qs = {&q};
  q.value.grad() = {1.0};
  sgd_step(qs, mom, 0);
  sgd_step(qs, mom, 1);
  CHECK(q.value[0] == doctest::Approx(-0.1 - 0.19).epsilon(1e-14));

  p.value.grad() = {3.0, 4.0};
  CHECK(clip_grad_norm(ps, 1.0) == doctest::Approx(5.0));
  CHECK(p.value.grad()[0] == doctest::Approx(0.6));
  CHECK_THROWS_AS((OptimizerConfig{0.0, 0.9, 1.0, 0, 0.0}.validate()), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ParameterStore store;
  Conv2d::create(store, "seg.conv", 3, 4, 3, 2, 1, 17);
  Dense::create(store, "seg.fc", 5, 2, 18);
  for (Parameter* p : store.all()) p->momentum.assign(p->value.size(), 0.125);
  Checkpoint ck = snapshot(store);
  const Checkpoint mom = snapshot(store, true);
  ck.insert(ck.end(), mom.begin(), mom.end());
  const auto bytes = encode_checkpoint(ck);
  CHECK(decode_checkpoint(bytes) == ck);

  const auto dir = testutil::scratch_dir("ckpt");
  save_checkpoint(dir / "a.gack", ck);
  CHECK(load_checkpoint(dir / "a.gack") == ck);

  ParameterStore other;
  Conv2d::create(other, "seg.conv", 3, 4, 3, 2, 1, 99);
  Dense::create(other, "seg.fc", 5, 2, 98);
  restore(other, ck);
  CHECK(checksum(other) == checksum(store));
  CHECK(other.all()[0]->momentum != store.all()[0]->momentum);
  restore(other, ck, true);
  CHECK(other.all()[0]->momentum == store.all()[0]->momentum);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), IoError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(bad), IoError);

  ParameterStore wrong;
  Conv2d::create(wrong, "seg.conv", 3, 5, 3, 2, 1, 1);
  CHECK_THROWS_AS(restore(wrong, ck), IoError);
}

TEST_CASE("initialization is seeded") {
  ParameterStore a, b, c;
  Conv2d::create(a, "x", 3, 4, 3, 1, 1, 5);
  Conv2d::create(b, "x", 3, 4, 3, 1, 1, 5);
  Conv2d::create(c, "x", 3, 4, 3, 1, 1, 6);
  CHECK(checksum(a) == checksum(b));
  CHECK(checksum(a) != checksum(c));
  CHECK_THROWS_AS(a.add("x.weight", {1}), ConfigError);
}

TEST_CASE("gradient checker") {
  ParameterStore store;
  Parameter& x = store.add("x", {1});
  x.value[0] = 3.0;
  std::vector<Parameter*> ps = {&x};
  const auto res = grad_check(ps, [&](bool backward) {
    if (backward) x.value.grad()[0] += 2.0 * x.value[0];
    return x.value[0] * x.value[0];
  });
  CHECK(res.max_rel_error < 1e-9);

  // Two-layer conv net on a zero input: the error stays finite.
  ParameterStore net;
  Conv2d c1 = Conv2d::create(net, "c1", 2, 3, 3, 1, 1, 1);
  Conv2d c2 = Conv2d::create(net, "c2", 3, 2, 3, 2, 1, 2);
  net.find("c1.bias")->value.values() = {0.3, -0.2, 0.25};
  net.find("c2.bias")->value.values() = {0.1, -0.15};
  for (const bool zero : {false, true}) {
    Rng rng(8);
    Tensor in = random_tensor(rng, {2, 6, 6});
    if (zero) std::fill(in.values().begin(), in.values().end(), 0.0);
    const std::vector<std::uint8_t> labels = {0, 1, 1, 0, 1, 0, 0, 1, 1};
    const auto r = grad_check(net.all(), [&](bool backward) {
      const Tensor h = c1.forward(in);
      const Tensor a = relu(h);
      const Tensor o = c2.forward(a);
      const CrossEntropy ce = softmax_cross_entropy(o, labels);
      if (backward) c1.backward(in, relu_backward(a, c2.backward(a, ce.dlogits)), false);
      return ce.loss;
    });
    CHECK(std::isfinite(r.max_rel_error));
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("every primitive and both networks pass the gradient check") {
  for (const std::uint64_t seed : {1u, 2u}) {
    for (const auto& e : run_gradient_suite(seed)) {
      INFO(e.name);
      CHECK(e.result.max_rel_error <= 1e-4);
      CHECK(e.result.entries_checked > 0);
    }
  }
}

TEST_CASE("encoder output stride") {
  ParameterStore store;
  ConvEncoder enc(store, "e", 3, {4, 8, 8}, 3);
  CHECK(enc.stride() == 8);
  const Tensor y = enc.forward(Tensor({3, 64, 48}, 0.5));
  CHECK(y.dims() == std::vector<int>{8, 8, 6});
}

TEST_CASE("primitives pass the gradient check on random shapes") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int cin = uniform_int(rng, 1, 3), cout = uniform_int(rng, 1, 3);
    const int k = uniform_int(rng, 0, 1) ? 3 : 1, stride = uniform_int(rng, 1, 2);
    const int h = uniform_int(rng, 3, 7), w = uniform_int(rng, 3, 7);
    const int oh = uniform_int(rng, 2, 9), ow = uniform_int(rng, 2, 9);
    ParameterStore store;
    const Conv2d conv = Conv2d::create(store, "c", cin, cout, k, stride, k / 2, 100 + trial);
    const Dense fc = Dense::create(store, "fc", cout, 2, 200 + trial);
    const Tensor x = random_tensor(rng, {cin, h, w});
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(oh) * ow, 0);
    for (auto& m : mask) m = static_cast<std::uint8_t>(uniform_int(rng, 0, 1));
    mask[0] = 1;
    const Tensor target = random_tensor(rng, {2});
    const auto r = grad_check(store.all(), [&](bool backward) {
      const Tensor y = conv.forward(x);
      const Tensor a = relu(y);
      const Tensor up = resize_bilinear(a, oh, ow);
      const Tensor pooled = masked_avg_pool(up, mask);
      const Tensor out = fc.forward(pooled);
      double loss = 0.0;
      Tensor dout({2});
      for (int i = 0; i < 2; ++i) {
        const double d = out[i] - target[i];
        loss += d * d;
        dout[i] = 2.0 * d;
      }
      if (backward) {
        const Tensor dp = fc.backward(pooled, dout);
        const Tensor dup = masked_avg_pool_backward(dp, mask, oh, ow);
        conv.backward(x, relu_backward(a, resize_bilinear_backward(dup, a.dim(1), a.dim(2))), false);
      }
      return loss;
    });
    INFO("trial " << trial);
    CHECK(r.max_rel_error <= 1e-4);
  }
}
