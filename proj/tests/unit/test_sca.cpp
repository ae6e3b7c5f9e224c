#include <doctest.h>

#include <cmath>

#include "bandit.hpp"
#include "geoagent/errors.hpp"
#include "geoagent/sca.hpp"
#include "helpers.hpp"

using namespace geoagent;

namespace {

Transition make_transition(double reward, double value, bool done = false) {
  Transition t;
  t.reward = reward;
  t.value = value;
  t.done = done;
  t.probs = {0.5, 0.5};
  t.log_prob = std::log(0.5);
  return t;
}

std::shared_ptr<Raster> quadrant_thumbnail(int n) {
  auto t = std::make_shared<Raster>(3, n, n);
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < n; ++r) {
      for (int x = 0; x < n; ++x) {
        const int q = (r < n / 2 ? 0 : 2) + (x < n / 2 ? 0 : 1);
        t->at(c, r, x) = 0.1 + 0.2 * q + 0.05 * c;
      }
    }
  }
  return t;
}

}  // namespace

TEST_CASE("td targets") {
  std::vector<Transition> one = {make_transition(0.5, 0.0)};
  CHECK(td_targets(one, 0.99, 5, 1.0)[0] == doctest::Approx(1.49).epsilon(1e-15));
  one[0].done = true;
  CHECK(td_targets(one, 0.99, 5, 1.0)[0] == 0.5);

  std::vector<Transition> seg = {make_transition(1, 0), make_transition(2, 0), make_transition(3, 0),
                                 make_transition(4, 0, true), make_transition(5, 0)};
  const auto g0 = td_targets(seg, 0.0, 5, 7.0);
  for (std::size_t i = 0; i < seg.size(); ++i) CHECK(g0[i] == seg[i].reward);

  const double g = 0.9;
  const auto tar = td_targets(seg, g, 2, 10.0);
  // Independent recomputation of the n-step formula.
  for (std::size_t t = 0; t < seg.size(); ++t) {
    double acc = 0.0, disc = 1.0;
    std::size_t k = t;
    bool cut = false;
    for (; k < seg.size() && k < t + 2; ++k) {
      acc += disc * seg[k].reward;
      disc *= g;
      if (seg[k].done) {
        cut = true;
        ++k;
        break;
      }
    }
    if (!cut) acc += disc * (k < seg.size() ? seg[k].value : 10.0);
    CHECK(tar[t] == doctest::Approx(acc).epsilon(1e-14));
  }
  CHECK_THROWS(td_targets(std::span<const Transition>{}, 0.9, 5, 0.0));
}

TEST_CASE("a2c losses") {
  AgentConfig cfg;
  std::vector<Transition> seg = {make_transition(0, 1.0)};
  CHECK(a2c_losses(seg, std::vector<double>{1.0}, cfg).policy == 0.0);
  CHECK(a2c_losses(seg, std::vector<double>{2.0}, cfg).policy == doctest::Approx(std::log(2.0)));
  const A2CLosses l = a2c_losses(seg, std::vector<double>{0.0}, cfg);
  CHECK(l.value == 1.0);
  CHECK(l.entropy == doctest::Approx(std::log(2.0)));
  CHECK(l.total == doctest::Approx(l.policy + 0.5));
}

TEST_CASE("policy gradient scales with the advantages") {
  const std::vector<std::vector<double>> probs = {{0.2, 0.5, 0.3}, {0.6, 0.1, 0.3}};
  const std::vector<int> actions = {2, 3};
  const std::vector<double> adv = {0.7, -1.3};
  std::vector<double> scaled = adv;
  for (double& a : scaled) a *= 3.5;
  const auto g1 = policy_logit_gradients(probs, actions, adv, 0.0);
  const auto g2 = policy_logit_gradients(probs, actions, scaled, 0.0);
  for (std::size_t t = 0; t < g1.size(); ++t) {
    for (std::size_t i = 0; i < g1[t].size(); ++i) CHECK(g2[t][i] == doctest::Approx(3.5 * g1[t][i]).epsilon(1e-13));
  }
}

TEST_CASE("actor critic outputs") {
  const ScaleAgent agent(AgentConfig{}, 1);
  nn::Rng rng(2);
  auto thumb = std::make_shared<Raster>(testutil::random_raster(rng, 3, 64, 64));
  for (int i = 0; i < 4; ++i) {
    const PatchSpec p{nn::uniform_int(rng, 0, 448), nn::uniform_int(rng, 0, 448), 64, 64, 1};
    const AgentOutput out = agent.evaluate({thumb, make_position_mask(p, {512, 512}, {64, 64})});
    double s = 0.0, lo = 1.0, hi = 0.0;
    for (double q : out.probs) {
      s += q;
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(hi - lo < 0.2);
    CHECK(std::isfinite(out.value));
  }
}

TEST_CASE("mask downsampling keeps any overlap") {
  BinaryMask m(8, 8);
  m.at(5, 2) = 1;
  const auto d = downsample_mask_any(m, 2, 2);
  CHECK(d == std::vector<std::uint8_t>{0, 0, 1, 0});
}

TEST_CASE("feature indexing separates positions") {
  const ScaleAgent agent(AgentConfig{}, 3);
  const auto thumb = quadrant_thumbnail(64);
  std::vector<std::vector<double>> enc;
  for (const auto& p : {PatchSpec{0, 0, 64, 64, 1}, PatchSpec{0, 448, 64, 64, 1}, PatchSpec{448, 0, 64, 64, 1},
                        PatchSpec{448, 448, 64, 64, 1}}) {
    enc.push_back(agent.encode_state({thumb, make_position_mask(p, {512, 512}, {64, 64})}));
  }
  for (std::size_t i = 0; i < enc.size(); ++i) {
    for (std::size_t j = i + 1; j < enc.size(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < enc[i].size(); ++k) d += (enc[i][k] - enc[j][k]) * (enc[i][k] - enc[j][k]);
      CHECK(std::sqrt(d) > 1e-9);
    }
  }
}

TEST_CASE("greedy actions break ties toward the smaller scale") {
  AgentOutput out;
  out.probs = {0.3, 0.3, 0.4};
  nn::Rng rng(1);
  CHECK(select_action(out, ActionMode::Greedy, rng) == 3);
  out.probs = {0.4, 0.4, 0.2};
  CHECK(select_action(out, ActionMode::Greedy, rng) == 1);
}

TEST_CASE("bandit rollouts") {
  const ScaleAgent agent(AgentConfig{}, 4);
  auto thumb = quadrant_thumbnail(64);
  BanditEnvironment env({thumb, make_position_mask({0, 0, 64, 64, 1}, {512, 512}, {64, 64})}, 3, 2);
  nn::Rng rng(5);
  const auto traj = rollout(env, agent, ActionMode::Greedy, rng);
  REQUIRE(traj.size() == 3);
  CHECK(traj.back().done);
  CHECK_FALSE(traj.front().done);
  env.reset();
  const auto again = rollout(env, agent, ActionMode::Greedy, rng);
  for (std::size_t i = 0; i < traj.size(); ++i) CHECK(again[i].action == traj[i].action);

  const auto run = testutil::train_bandit(3, 4, 5000, 11);
  CHECK(run.steps > 0);
  CHECK(run.final_prob > 0.9);
}

TEST_CASE("agent config validation") {
  AgentConfig c;
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.actions = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
