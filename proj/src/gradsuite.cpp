#include "geoagent/gradsuite.hpp"

#include <cmath>

#include "geoagent/nn/ops.hpp"
#include "geoagent/nn/rng.hpp"
#include "geoagent/sca.hpp"
#include "geoagent/segnet.hpp"

namespace geoagent {

namespace {

using nn::Parameter;
using nn::ParameterStore;
using nn::Tensor;

// Values bounded away from zero so ReLU kinks stay outside the difference stencil.
void fill(Tensor& t, nn::Rng& rng) {
  for (double& v : t.values()) {
    const double u = nn::uniform(rng, -1.0, 1.0);
    v = (u < 0 ? -0.1 : 0.1) + u;
  }
}

Parameter& input(ParameterStore& store, const std::string& name, std::vector<int> dims, nn::Rng& rng) {
  Parameter& p = store.add(name, std::move(dims));
  fill(p.value, rng);
  return p;
}

// Sum of w * y with w fixed; backward feeds w as the upstream gradient.
double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

void accumulate(Parameter& p, const Tensor& g) {
  auto& grad = p.value.grad();
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

Tensor random_like(const std::vector<int>& dims, nn::Rng& rng) {
  Tensor w(dims);
  fill(w, rng);
  return w;
}

template <typename Forward, typename Backward>
GradSuiteEntry unary_check(const std::string& name, std::vector<int> in_dims, nn::Rng& rng, Forward f,
                           Backward b) {
  ParameterStore store;
  Parameter& x = input(store, "x", std::move(in_dims), rng);
  const Tensor w = random_like(f(x.value).dims(), rng);
  auto params = store.all();
  const auto res = nn::grad_check(params, [&](bool backward) {
    const Tensor y = f(x.value);
    if (backward) accumulate(x, b(x.value, y, w));
    return weighted_sum(y, w);
  });
  return {name, res};
}

std::vector<std::uint8_t> random_mask(std::size_t n, nn::Rng& rng) {
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = nn::uniform01(rng) < 0.5 ? 1 : 0;
  m[0] = 1;
  return m;
}

GradSuiteEntry conv_check(const std::string& name, int stride, int pad, int k, nn::Rng& rng, std::uint64_t seed) {
  ParameterStore store;
  Parameter& x = input(store, "x", {3, 7, 6}, rng);
  const nn::Conv2d conv = nn::Conv2d::create(store, "conv", 3, 4, k, stride, pad, seed);
  const Tensor w = random_like(conv.forward(x.value).dims(), rng);
  auto params = store.all();
  return {name, nn::grad_check(params, [&](bool backward) {
            const Tensor y = conv.forward(x.value);
            if (backward) accumulate(x, conv.backward(x.value, w));
            return weighted_sum(y, w);
          })};
}

GradSuiteEntry segnet_check(int scale, std::uint64_t seed, nn::Rng& rng) {
  SegNetConfig cfg;
  cfg.classes = 3;
  cfg.widths = {4, 5};
  cfg.fusion_channels = 5;
  SegNet net(cfg, seed);
  // Zero biases put dead receptive fields exactly on the ReLU kink.
  for (Parameter* q : net.params().all()) {
    if (q->name.ends_with(".bias")) fill(q->value, rng);
  }
  Raster raster(3, 24, 28);
  for (double& v : raster.data) v = nn::uniform01(rng);
  LabelMask labels(24, 28, cfg.classes, 0);
  for (auto& v : labels.data) v = static_cast<std::uint8_t>(nn::uniform_int(rng, 0, cfg.classes - 1));
  const PatchSpec p{8, 12, 8, 8, scale};
  const Raster local = extract_local(raster, p);
  const Raster context = extract_context(raster, p, scale);
  const LabelMask y = extract_local(labels, p);
  const LabelMask y_ctx = extract_context_labels(labels, p, scale);
  auto params = net.params().all();
  const auto res = nn::grad_check(params, [&](bool backward) {
    SegTrace trace;
    net.forward(local, scale > 1 ? &context : nullptr, scale, p, {24, 28}, &trace);
    const LabelMask* yc = scale > 1 ? &y_ctx : nullptr;
    return backward ? net.backward(trace, y, yc).total : net.loss(trace, y, yc).total;
  });
  return {"segnet(scale=" + std::to_string(scale) + ")", res};
}

GradSuiteEntry agent_check(bool feature_indexing, std::uint64_t seed, nn::Rng& rng) {
  AgentConfig cfg;
  cfg.actions = 3;
  cfg.widths = {4, 5};
  cfg.hidden = 6;
  cfg.entropy_coef = 0.05;
  cfg.feature_indexing = feature_indexing;
  ScaleAgent agent(cfg, seed);
  for (Parameter* q : agent.params().all()) {
    if (q->name.ends_with(".bias")) fill(q->value, rng);
  }
  // Larger output weights than the near-uniform init so the policy term is not vanishingly small.
  for (double& v : agent.params().find("sca.actor.fc2.weight")->value.values()) v *= 50.0;
  auto thumb = std::make_shared<Raster>(3, 16, 16);
  for (double& v : thumb->data) v = nn::uniform01(rng);
  std::vector<Transition> segment;
  std::vector<double> targets;
  for (int i = 0; i < 3; ++i) {
    Transition tr;
    tr.state.thumbnail = thumb;
    tr.state.position_mask = make_position_mask(PatchSpec{i * 5, 16 - 8 - i * 4, 8, 8, 1}, {32, 32}, {16, 16});
    tr.action = i % cfg.actions + 1;
    tr.value = nn::uniform(rng, -1.0, 1.0);  // stored estimate; fixes the advantage
    segment.push_back(tr);
    targets.push_back(nn::uniform(rng, -1.0, 1.0));
  }
  auto params = agent.params().all();
  const auto res = nn::grad_check(params, [&](bool backward) {
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(segment.size());
    for (std::size_t i = 0; i < segment.size(); ++i) {
      const AgentOutput out = agent.evaluate(segment[i].state);
      const double adv = targets[i] - segment[i].value;
      double h = 0.0;
      for (double q : out.probs) h -= q * std::log(q);
      loss += inv * (-adv * std::log(out.probs[segment[i].action - 1]) +
                     cfg.value_coef * (out.value - targets[i]) * (out.value - targets[i]) -
                     cfg.entropy_coef * h);
    }
    if (backward) accumulate_a2c_gradients(agent, segment, targets);
    return loss;
  });
  return {std::string("agent(") + (feature_indexing ? "feature indexing" : "mask channel") + ")", res};
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  nn::Rng rng = nn::make_stream(seed, "gradsuite");
  std::vector<GradSuiteEntry> out;
  out.push_back(conv_check("conv3x3 stride 1", 1, 1, 3, rng, seed));
  out.push_back(conv_check("conv3x3 stride 2", 2, 1, 3, rng, seed));
  out.push_back(conv_check("conv1x1", 1, 0, 1, rng, seed));
  {
    ParameterStore store;
    Parameter& x = input(store, "x", {5}, rng);
    const nn::Dense fc = nn::Dense::create(store, "fc", 5, 4, seed);
    const Tensor w = random_like({4}, rng);
    auto params = store.all();
    out.push_back({"dense", nn::grad_check(params, [&](bool backward) {
                     const Tensor y = fc.forward(x.value);
                     if (backward) accumulate(x, fc.backward(x.value, w));
                     return weighted_sum(y, w);
                   })});
  }
  out.push_back(unary_check("relu", {2, 4, 5}, rng, [](const Tensor& x) { return nn::relu(x); },
                            [](const Tensor&, const Tensor& y, const Tensor& w) { return nn::relu_backward(y, w); }));
  out.push_back(unary_check(
      "bilinear upsample", {2, 3, 4}, rng, [](const Tensor& x) { return nn::resize_bilinear(x, 7, 9); },
      [](const Tensor&, const Tensor&, const Tensor& w) { return nn::resize_bilinear_backward(w, 3, 4); }));
  out.push_back(unary_check(
      "bilinear downsample", {2, 8, 7}, rng, [](const Tensor& x) { return nn::resize_bilinear(x, 3, 5); },
      [](const Tensor&, const Tensor&, const Tensor& w) { return nn::resize_bilinear_backward(w, 8, 7); }));
  out.push_back(unary_check(
      "nearest upsample", {2, 3, 3}, rng, [](const Tensor& x) { return nn::upsample_nearest(x, 2); },
      [](const Tensor&, const Tensor&, const Tensor& w) { return nn::upsample_nearest_backward(w, 2); }));
  out.push_back(unary_check(
      "global average pool", {3, 4, 5}, rng, [](const Tensor& x) { return nn::global_avg_pool(x); },
      [](const Tensor&, const Tensor&, const Tensor& w) { return nn::global_avg_pool_backward(w, 4, 5); }));
  {
    const auto mask = random_mask(20, rng);
    out.push_back(unary_check(
        "masked average pool", {3, 4, 5}, rng, [&](const Tensor& x) { return nn::masked_avg_pool(x, mask); },
        [&](const Tensor&, const Tensor&, const Tensor& w) { return nn::masked_avg_pool_backward(w, mask, 4, 5); }));
    out.push_back(unary_check(
        "mask", {3, 4, 5}, rng, [&](const Tensor& x) { return nn::apply_mask(x, mask); },
        [&](const Tensor&, const Tensor&, const Tensor& w) { return nn::apply_mask(w, mask); }));
  }
  out.push_back(unary_check(
      "crop", {2, 6, 7}, rng, [](const Tensor& x) { return nn::crop(x, 1, 4, 2, 7); },
      [](const Tensor&, const Tensor&, const Tensor& w) { return nn::crop_backward(w, 6, 7, 1, 2); }));
  {
    ParameterStore store;
    Parameter& a = input(store, "a", {2, 3, 3}, rng);
    Parameter& b = input(store, "b", {3, 3, 3}, rng);
    const Tensor w = random_like({5, 3, 3}, rng);
    auto params = store.all();
    out.push_back({"channel concat", nn::grad_check(params, [&](bool backward) {
                     const Tensor y = nn::concat_channels(a.value, b.value);
                     if (backward) {
                       auto [da, db] = nn::split_channels(w, 2);
                       accumulate(a, da);
                       accumulate(b, db);
                     }
                     return weighted_sum(y, w);
                   })});
  }
  {
    ParameterStore store;
    Parameter& x = input(store, "logits", {4, 3, 5}, rng);
    std::vector<std::uint8_t> labels(15);
    for (auto& v : labels) v = static_cast<std::uint8_t>(nn::uniform_int(rng, 0, 3));
    auto params = store.all();
    out.push_back({"softmax cross-entropy", nn::grad_check(params, [&](bool backward) {
                     const auto ce = nn::softmax_cross_entropy(x.value, labels, 0.7);
                     if (backward) accumulate(x, ce.dlogits);
                     return 0.7 * ce.loss;
                   })});
  }
  out.push_back(segnet_check(1, seed, rng));
  out.push_back(segnet_check(2, seed, rng));
  out.push_back(segnet_check(3, seed, rng));
  out.push_back(agent_check(true, seed, rng));
  out.push_back(agent_check(false, seed, rng));
  return out;
}

}  // namespace geoagent
