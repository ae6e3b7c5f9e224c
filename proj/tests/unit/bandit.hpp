#pragma once

#include <memory>
#include <vector>

#include "geoagent/environment.hpp"
#include "geoagent/nn/optimizer.hpp"
#include "geoagent/sca.hpp"

namespace testutil {

struct BanditRun {
  long steps = -1;  // transitions until pi(k) > threshold, -1 if never
  double final_prob = 0.0;
};

/// A2C on the injected-reward bandit; returns when pi(rewarded) exceeds
/// `threshold` (checked after every update) or the step budget runs out.
inline BanditRun train_bandit(int rewarded, int actions, long budget, std::uint64_t seed, double threshold = 0.9) {
  using namespace geoagent;
  AgentConfig cfg;
  cfg.actions = actions;
  cfg.widths = {8, 8};
  cfg.hidden = 16;
  ScaleAgent agent(cfg, seed);
  nn::Rng rng = nn::make_stream(seed, "bandit");
  auto thumb = std::make_shared<Raster>(3, 16, 16);
  for (double& v : thumb->data) v = nn::uniform01(rng);
  const State state{thumb, make_position_mask({0, 0, 32, 32, 1}, {64, 64}, {16, 16})};
  BanditEnvironment env(state, 16, rewarded);
  const nn::OptimizerConfig opt{0.01, 0.9, 1.0, 0, 0.5};

  BanditRun run;
  long steps = 0;
  std::int64_t updates = 0;
  while (steps < budget) {
    std::vector<Transition> seg;
    for (int i = 0; i < cfg.n_steps && steps < budget; ++i, ++steps) {
      if (env.done()) env.reset();
      Transition tr;
      tr.state = env.observe();
      const AgentOutput out = agent.evaluate(tr.state);
      tr.action = select_action(out, ActionMode::Sample, rng);
      tr.value = out.value;
      tr.probs = out.probs;
      tr.log_prob = std::log(out.probs[tr.action - 1]);
      const StepResult r = env.step(tr.action);
      tr.reward = r.reward;
      tr.done = r.done;
      seg.push_back(std::move(tr));
    }
    const double boot = seg.back().done ? 0.0 : agent.evaluate(env.observe()).value;
    const auto targets = td_targets(seg, cfg.gamma, cfg.n_steps, boot);
    agent.params().zero_grad();
    accumulate_a2c_gradients(agent, seg, targets);
    auto params = agent.params().all();
    nn::clip_grad_norm(params, opt.max_grad_norm);
    nn::sgd_step(params, opt, updates++);
    run.final_prob = agent.evaluate(state).probs[rewarded - 1];
    if (run.final_prob > threshold) {
      run.steps = steps;
      return run;
    }
  }
  return run;
}

}  // namespace testutil
