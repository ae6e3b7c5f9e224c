#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "geoagent/nn/encoder.hpp"
#include "geoagent/nn/rng.hpp"
#include "geoagent/tiling.hpp"

namespace geoagent {

struct AgentConfig {
  int actions = 6;  // scales 1..N
  double gamma = 0.99;
  int n_steps = 5;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  int in_channels = 3;
  std::vector<int> widths = {16, 32, 32};
  int hidden = 64;
  // Off: the position mask becomes an extra input channel and pooling runs
  // over the whole map (the ablated variant without feature indexing).
  bool feature_indexing = true;

  void validate() const;
};

/// Agent observation: the episode's shared thumbnail plus this patch's
/// position mask at thumbnail resolution.
struct State {
  std::shared_ptr<const Raster> thumbnail;
  BinaryMask position_mask;
};

struct AgentOutput {
  std::vector<double> logits;
  std::vector<double> probs;  // probs[i] is the probability of scale i + 1
  double value = 0.0;
};

struct AgentStepTrace {
  std::vector<std::uint8_t> cell_mask;
  nn::EncoderTrace encoder;  // ablated variant only
  nn::Tensor features;       // ablated variant only
  nn::Tensor masked, conv_out, pooled;
  nn::Tensor actor_hidden, critic_hidden;
};

struct AgentTrace {
  nn::EncoderTrace encoder;
  nn::Tensor features;
  std::vector<AgentStepTrace> steps;
};

/// Reduces a thumbnail-resolution mask to an fh x fw grid: a cell is set
/// when any thumbnail pixel it covers is set.
std::vector<std::uint8_t> downsample_mask_any(const BinaryMask& mask, int fh, int fw);

/// Scale Control Agent: a conv backbone over the thumbnail, feature indexing
/// by the position mask (mask, 3x3 conv, masked average pool) and separate
/// actor and critic heads on the shared feature vector.
class ScaleAgent {
 public:
  ScaleAgent(const AgentConfig& cfg, std::uint64_t seed);
  ScaleAgent(ScaleAgent&&) = default;
  ScaleAgent& operator=(ScaleAgent&&) = default;

  const AgentConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  std::vector<double> encode_state(const State& state) const;
  AgentOutput evaluate(const State& state) const;

  /// Batch of states that share one thumbnail; the backbone runs once.
  std::vector<AgentOutput> forward(const Raster& thumbnail, std::span<const BinaryMask> masks,
                                   AgentTrace* trace = nullptr) const;
  /// Accumulates parameter gradients given d(loss)/d(logits) and d(loss)/d(value) per state.
  void backward(const AgentTrace& trace, std::span<const std::vector<double>> dlogits,
                std::span<const double> dvalues);

 private:
  nn::Tensor backbone_input(const Raster& thumbnail, const BinaryMask* mask) const;
  AgentOutput heads(const nn::Tensor& pooled, AgentStepTrace* step) const;

  AgentConfig cfg_;
  nn::ParameterStore store_;
  nn::ConvEncoder backbone_;
  nn::Conv2d index_conv_;
  nn::Dense actor_hidden_, actor_out_;
  nn::Dense critic_hidden_, critic_out_;
};

struct Transition {
  State state;
  int action = 1;  // scale in [1, N]
  double reward = 0.0;
  double value = 0.0;
  double log_prob = 0.0;
  std::vector<double> probs;
  bool done = false;
};

/// n-step returns: sum_{k<m} gamma^k r_{t+k} + gamma^m V(s_{t+m}), with m
/// capped by n and by the segment end, and no bootstrap past a done flag.
/// `bootstrap_value` is V(s) for the state following the segment.
std::vector<double> td_targets(std::span<const Transition> segment, double gamma, int n,
                               double bootstrap_value);

struct A2CLosses {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

/// Losses from the stored log-probabilities and value estimates.
A2CLosses a2c_losses(std::span<const Transition> segment, std::span<const double> targets,
                     const AgentConfig& cfg);

/// d(L_policy - c_e * entropy)/d(logits) for each step; advantages are
/// treated as constants.
std::vector<std::vector<double>> policy_logit_gradients(std::span<const std::vector<double>> probs,
                                                        std::span<const int> actions,
                                                        std::span<const double> advantages,
                                                        double entropy_coef);

/// Re-runs the agent over the segment's states (one backbone pass per
/// distinct thumbnail) and accumulates the gradients of
/// L_policy + c_v * L_value - c_e * entropy into its parameters.
A2CLosses accumulate_a2c_gradients(ScaleAgent& agent, std::span<const Transition> segment,
                                   std::span<const double> targets);

struct StepResult {
  double reward = 0.0;  // patch reward plus the map bonus on the final step
  double patch_reward = 0.0;
  std::optional<double> map_bonus;
  bool done = false;
};

/// One raster's tile sequence seen as an MDP.
class ScaleEnvironment {
 public:
  virtual ~ScaleEnvironment() = default;
  virtual std::size_t length() const = 0;
  virtual std::size_t position() const = 0;
  virtual State observe() const = 0;
  virtual StepResult step(int action) = 0;
  bool done() const { return position() >= length(); }
};

enum class ActionMode { Sample, Greedy };

/// Picks a scale from the actor: sampled, or argmax (lowest scale on ties).
int select_action(const AgentOutput& out, ActionMode mode, nn::Rng& rng);

/// Runs the environment to completion with the agent choosing every scale.
std::vector<Transition> rollout(ScaleEnvironment& env, const ScaleAgent& agent, ActionMode mode,
                                nn::Rng& rng);

}  // namespace geoagent
