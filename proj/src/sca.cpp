#include "geoagent/sca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "geoagent/errors.hpp"

namespace geoagent {

void AgentConfig::validate() const {
  if (actions < 2) throw ConfigError("agent: need at least 2 actions");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("agent: gamma must be in [0,1]");
  if (n_steps < 1) throw ConfigError("agent: n_steps must be >= 1");
  if (value_coef < 0.0 || entropy_coef < 0.0) throw ConfigError("agent: loss coefficients must be >= 0");
  if (widths.empty() || hidden < 1 || in_channels < 1) throw ConfigError("agent: bad network shape");
}

std::vector<std::uint8_t> downsample_mask_any(const BinaryMask& mask, int fh, int fw) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(fh) * fw, 0);
  for (int r = 0; r < mask.height; ++r) {
    const int fr = static_cast<int>(static_cast<long long>(r) * fh / mask.height);
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c)) out[static_cast<std::size_t>(fr) * fw + c * fw / mask.width] = 1;
    }
  }
  return out;
}

ScaleAgent::ScaleAgent(const AgentConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const int in = cfg.in_channels + (cfg.feature_indexing ? 0 : 1);
  backbone_ = nn::ConvEncoder(store_, "sca.backbone", in, cfg.widths, seed);
  const int C = backbone_.out_channels();
  index_conv_ = nn::Conv2d::create(store_, "sca.index_conv", C, C, 3, 1, 1, seed);
  actor_hidden_ = nn::Dense::create(store_, "sca.actor.fc1", C, cfg.hidden, seed);
  // Small output weights start the policy close to uniform.
  actor_out_ = nn::Dense::create(store_, "sca.actor.fc2", cfg.hidden, cfg.actions, seed, 0.01);
  critic_hidden_ = nn::Dense::create(store_, "sca.critic.fc1", C, cfg.hidden, seed);
  critic_out_ = nn::Dense::create(store_, "sca.critic.fc2", cfg.hidden, 1, seed);
}

nn::Tensor ScaleAgent::backbone_input(const Raster& thumbnail, const BinaryMask* mask) const {
  if (thumbnail.channels != cfg_.in_channels) {
    throw DimensionError("agent: thumbnail has " + std::to_string(thumbnail.channels) +
                         " channels, expected " + std::to_string(cfg_.in_channels));
  }
  nn::Tensor x = nn::to_tensor(thumbnail);
  if (mask == nullptr) return x;
  nn::Tensor m({1, mask->height, mask->width});
  for (std::size_t i = 0; i < mask->data.size(); ++i) m[i] = mask->data[i] ? 1.0 : 0.0;
  return nn::concat_channels(x, m);
}

AgentOutput ScaleAgent::heads(const nn::Tensor& pooled, AgentStepTrace* step) const {
  AgentOutput out;
  nn::Tensor ha = nn::relu(actor_hidden_.forward(pooled));
  nn::Tensor logits = actor_out_.forward(ha);
  nn::Tensor hc = nn::relu(critic_hidden_.forward(pooled));
  out.value = critic_out_.forward(hc)[0];
  out.logits = logits.values();
  out.probs = nn::softmax(logits).values();
  if (step) {
    step->pooled = pooled;
    step->actor_hidden = std::move(ha);
    step->critic_hidden = std::move(hc);
  }
  return out;
}

std::vector<AgentOutput> ScaleAgent::forward(const Raster& thumbnail, std::span<const BinaryMask> masks,
                                             AgentTrace* trace) const {
  std::vector<AgentOutput> outs;
  outs.reserve(masks.size());
  if (trace) {
    *trace = AgentTrace{};
    trace->steps.resize(masks.size());
  }
  if (cfg_.feature_indexing) {
    nn::EncoderTrace enc;
    nn::Tensor features = backbone_.forward(backbone_input(thumbnail, nullptr), trace ? &enc : nullptr);
    const int fh = features.dim(1), fw = features.dim(2);
    for (std::size_t i = 0; i < masks.size(); ++i) {
      AgentStepTrace local;
      AgentStepTrace& st = trace ? trace->steps[i] : local;
      st.cell_mask = downsample_mask_any(masks[i], fh, fw);
      if (std::none_of(st.cell_mask.begin(), st.cell_mask.end(), [](auto v) { return v != 0; })) {
        throw GeometryError("agent: position mask is empty at feature resolution");
      }
      st.masked = nn::apply_mask(features, st.cell_mask);
      st.conv_out = nn::relu(index_conv_.forward(st.masked));
      outs.push_back(heads(nn::masked_avg_pool(st.conv_out, st.cell_mask), &st));
    }
    if (trace) {
      trace->encoder = std::move(enc);
      trace->features = std::move(features);
    }
    return outs;
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    AgentStepTrace local;
    AgentStepTrace& st = trace ? trace->steps[i] : local;
    st.features = backbone_.forward(backbone_input(thumbnail, &masks[i]), &st.encoder);
    st.masked = st.features;
    st.conv_out = nn::relu(index_conv_.forward(st.masked));
    outs.push_back(heads(nn::global_avg_pool(st.conv_out), &st));
  }
  return outs;
}

void ScaleAgent::backward(const AgentTrace& trace, std::span<const std::vector<double>> dlogits,
                          std::span<const double> dvalues) {
  if (dlogits.size() != trace.steps.size() || dvalues.size() != trace.steps.size()) {
    throw DimensionError("agent backward: gradient count does not match the traced batch");
  }
  nn::Tensor d_features;
  if (cfg_.feature_indexing) d_features = nn::Tensor(trace.features.dims());
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const AgentStepTrace& st = trace.steps[i];
    nn::Tensor dl({cfg_.actions});
    dl.values() = dlogits[i];
    nn::Tensor dha = nn::relu_backward(st.actor_hidden, actor_out_.backward(st.actor_hidden, dl));
    nn::Tensor dpool = actor_hidden_.backward(st.pooled, dha);
    nn::Tensor dv({1});
    dv[0] = dvalues[i];
    nn::Tensor dhc = nn::relu_backward(st.critic_hidden, critic_out_.backward(st.critic_hidden, dv));
    nn::add_inplace(dpool, critic_hidden_.backward(st.pooled, dhc));
    const int h = st.conv_out.dim(1), w = st.conv_out.dim(2);
    nn::Tensor dconv = cfg_.feature_indexing ? nn::masked_avg_pool_backward(dpool, st.cell_mask, h, w)
                                             : nn::global_avg_pool_backward(dpool, h, w);
    dconv = nn::relu_backward(st.conv_out, dconv);
    nn::Tensor dmasked = index_conv_.backward(st.masked, dconv);
    if (cfg_.feature_indexing) {
      nn::add_inplace(d_features, nn::apply_mask(dmasked, st.cell_mask));
    } else {
      backbone_.backward(st.encoder, dmasked);
    }
  }
  if (cfg_.feature_indexing && !trace.steps.empty()) backbone_.backward(trace.encoder, d_features);
}

std::vector<double> ScaleAgent::encode_state(const State& state) const {
  AgentTrace trace;
  forward(*state.thumbnail, std::span(&state.position_mask, 1), &trace);
  return trace.steps.front().pooled.values();
}

AgentOutput ScaleAgent::evaluate(const State& state) const {
  return forward(*state.thumbnail, std::span(&state.position_mask, 1)).front();
}

std::vector<double> td_targets(std::span<const Transition> segment, double gamma, int n,
                               double bootstrap_value) {
  if (segment.empty()) throw Error("td_targets: empty segment");
  const std::size_t len = segment.size();
  std::vector<double> targets(len);
  for (std::size_t t = 0; t < len; ++t) {
    double ret = 0.0;
    double discount = 1.0;
    std::size_t m = 0;
    bool terminated = false;
    while (m < static_cast<std::size_t>(n) && t + m < len) {
      const Transition& tr = segment[t + m];
      ret += discount * tr.reward;
      discount *= gamma;
      ++m;
      if (tr.done) {
        terminated = true;
        break;
      }
    }
    if (!terminated) ret += discount * (t + m < len ? segment[t + m].value : bootstrap_value);
    targets[t] = ret;
  }
  return targets;
}

namespace {

double entropy_of(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

}  // namespace

A2CLosses a2c_losses(std::span<const Transition> segment, std::span<const double> targets,
                     const AgentConfig& cfg) {
  if (segment.size() != targets.size()) throw DimensionError("a2c_losses: targets not aligned with transitions");
  A2CLosses l;
  if (segment.empty()) return l;
  const double inv = 1.0 / static_cast<double>(segment.size());
  for (std::size_t t = 0; t < segment.size(); ++t) {
    const double adv = targets[t] - segment[t].value;
    l.policy += -adv * segment[t].log_prob * inv;
    const double diff = segment[t].value - targets[t];
    l.value += diff * diff * inv;
    l.entropy += entropy_of(segment[t].probs) * inv;
  }
  l.total = l.policy + cfg.value_coef * l.value - cfg.entropy_coef * l.entropy;
  return l;
}

std::vector<std::vector<double>> policy_logit_gradients(std::span<const std::vector<double>> probs,
                                                        std::span<const int> actions,
                                                        std::span<const double> advantages,
                                                        double entropy_coef) {
  const std::size_t T = probs.size();
  std::vector<std::vector<double>> grads(T);
  const double inv = T ? 1.0 / static_cast<double>(T) : 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& p = probs[t];
    const double h = entropy_of(p);
    grads[t].resize(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double onehot = static_cast<int>(k) + 1 == actions[t] ? 1.0 : 0.0;
      // d(-A log p_a)/dz_k = A (p_k - [k == a]);  d(-c H)/dz_k = c p_k (log p_k + H)
      double g = advantages[t] * (p[k] - onehot);
      if (entropy_coef != 0.0 && p[k] > 0.0) g += entropy_coef * p[k] * (std::log(p[k]) + h);
      grads[t][k] = g * inv;
    }
  }
  return grads;
}

A2CLosses accumulate_a2c_gradients(ScaleAgent& agent, std::span<const Transition> segment,
                                   std::span<const double> targets) {
  if (segment.size() != targets.size()) throw DimensionError("a2c: targets not aligned with transitions");
  const AgentConfig& cfg = agent.config();
  const std::size_t M = segment.size();
  std::vector<const Raster*> groups;
  std::vector<std::size_t> group_of(M);
  for (std::size_t i = 0; i < M; ++i) {
    const Raster* th = segment[i].state.thumbnail.get();
    auto it = std::find(groups.begin(), groups.end(), th);
    group_of[i] = static_cast<std::size_t>(std::distance(groups.begin(), it));
    if (it == groups.end()) groups.push_back(th);
  }
  std::vector<AgentTrace> traces(groups.size());
  std::vector<std::vector<std::size_t>> members(groups.size());
  std::vector<std::vector<double>> probs(M);
  std::vector<double> values(M);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<BinaryMask> masks;
    for (std::size_t i = 0; i < M; ++i) {
      if (group_of[i] != g) continue;
      members[g].push_back(i);
      masks.push_back(segment[i].state.position_mask);
    }
    const auto outs = agent.forward(*groups[g], masks, &traces[g]);
    for (std::size_t j = 0; j < outs.size(); ++j) {
      probs[members[g][j]] = outs[j].probs;
      values[members[g][j]] = outs[j].value;
    }
  }
  std::vector<int> actions(M);
  std::vector<double> adv(M);
  for (std::size_t i = 0; i < M; ++i) {
    actions[i] = segment[i].action;
    adv[i] = targets[i] - segment[i].value;
  }
  const auto dlogits = policy_logit_gradients(probs, actions, adv, cfg.entropy_coef);
  const double inv = M ? 1.0 / static_cast<double>(M) : 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<std::vector<double>> dl;
    std::vector<double> dv;
    for (std::size_t i : members[g]) {
      dl.push_back(dlogits[i]);
      dv.push_back(cfg.value_coef * 2.0 * (values[i] - targets[i]) * inv);
    }
    agent.backward(traces[g], dl, dv);
  }
  return a2c_losses(segment, targets, cfg);
}

int select_action(const AgentOutput& out, ActionMode mode, nn::Rng& rng) {
  if (mode == ActionMode::Greedy) {
    return static_cast<int>(std::distance(out.probs.begin(), std::max_element(out.probs.begin(), out.probs.end()))) + 1;
  }
  return nn::sample_categorical(rng, out.probs) + 1;
}

std::vector<Transition> rollout(ScaleEnvironment& env, const ScaleAgent& agent, ActionMode mode,
                                nn::Rng& rng) {
  std::vector<Transition> trajectory;
  trajectory.reserve(env.length());
  while (!env.done()) {
    Transition tr;
    tr.state = env.observe();
    const AgentOutput out = agent.evaluate(tr.state);
    tr.action = select_action(out, mode, rng);
    tr.value = out.value;
    tr.probs = out.probs;
    tr.log_prob = std::log(std::max(out.probs[tr.action - 1], 1e-300));
    const StepResult res = env.step(tr.action);
    tr.reward = res.reward;
    tr.done = res.done;
    trajectory.push_back(std::move(tr));
  }
  return trajectory;
}

}  // namespace geoagent
