#include <doctest.h>

#include <cmath>

#include "geoagent/baselines.hpp"
#include "geoagent/errors.hpp"
#include "geoagent/synthgeo.hpp"
#include "helpers.hpp"

using namespace geoagent;

namespace {

std::vector<std::shared_ptr<const Scene>> scenes(int n) {
  std::vector<std::shared_ptr<const Scene>> out;
  for (int i = 0; i < n; ++i) {
    SceneConfig cfg;
    cfg.height = cfg.width = 64;
    cfg.patch_hint = 16;
    cfg.ponds = {1, 2};
    cfg.large_water = {1, 1};
    cfg.built = {1, 1};
    cfg.seed = 100 + i;
    GeneratedScene g = generate_scene(cfg);
    out.push_back(std::make_shared<const Scene>(Scene{"s" + std::to_string(i), std::move(g.raster), std::move(g.labels)}));
  }
  return out;
}

struct Fixture {
  SegNet net{[] {
               SegNetConfig c;
               c.widths = {4, 6};
               c.fusion_channels = 6;
               return c;
             }(),
             1};
  ScaleAgent agent{[] {
                     AgentConfig c;
                     c.actions = 4;
                     c.widths = {4, 6};
                     c.hidden = 8;
                     return c;
                   }(),
                   2};
  PolicyContext ctx() const { return {&net, &agent, {16, 16, 16, 16}, 4}; }
};

double patch_reward_sum(const MappingEpisode& ep) {
  double s = 0.0;
  for (const auto& r : ep.rewards()) s += r.patch_reward;
  return s;
}

}  // namespace

TEST_CASE("policy names parse back") {
  for (const std::string text : {"local-only", "context-only:3", "fixed:4", "single-branch", "learned", "oracle"}) {
    CHECK(Policy::parse(text).name() == text);
  }
  const Policy r = Policy::parse("random:17");
  CHECK(r.name() == "random");
  CHECK(r.seed == 17);
  CHECK_THROWS_AS(Policy::parse("fixed"), ConfigError);
  CHECK_THROWS_AS(Policy::parse("fixed:x"), ConfigError);
  CHECK_THROWS_AS(Policy::parse("greedy"), ConfigError);
  CHECK(Policy::learned().needs_agent());
  CHECK_FALSE(Policy::oracle().needs_agent());
  CHECK(Policy::context_only(2).branch() == BranchMode::SingleBranch);
}

TEST_CASE("local-only earns zero and the oracle dominates fixed scales") {
  const Fixture f;
  const auto ss = scenes(3);
  const PolicyReport local = evaluate_policy(Policy::local_only(), ss, f.ctx());
  CHECK(local.mean.episode_reward == 0.0);

  nn::Rng rng(1);
  for (const auto& s : ss) {
    const MappingEpisode oracle = run_policy(Policy::oracle(), s, f.ctx(), rng);
    for (int a = 1; a <= 4; ++a) {
      const MappingEpisode fixed = run_policy(Policy::fixed_scale(a), s, f.ctx(), rng);
      CHECK(patch_reward_sum(oracle) >= patch_reward_sum(fixed) - 1e-12);
    }
  }
}

TEST_CASE("random scale reports five seeded runs") {
  const Fixture f;
  const auto ss = scenes(2);
  const PolicyReport r = evaluate_policy(Policy::random_scale(5), ss, f.ctx());
  REQUIRE(r.runs.size() == 5);
  for (std::size_t i = 1; i < r.runs.size(); ++i) CHECK(r.runs[i].seed != r.runs[0].seed);
  CHECK(r.sd.episode_reward > 0.0);
  const PolicyReport again = evaluate_policy(Policy::random_scale(5), ss, f.ctx());
  CHECK(again.mean.score == r.mean.score);

  double m = 0.0;
  for (const auto& run : r.runs) m += run.mean.score;
  CHECK(r.mean.score == doctest::Approx(m / 5.0));
}

TEST_CASE("learned policy is greedy and deterministic") {
  const Fixture f;
  const auto ss = scenes(1);
  nn::Rng a(1), b(2);
  const MappingEpisode x = run_policy(Policy::learned(), ss[0], f.ctx(), a);
  const MappingEpisode y = run_policy(Policy::learned(), ss[0], f.ctx(), b);
  CHECK(x.actions_taken() == y.actions_taken());

  PolicyContext no_agent = f.ctx();
  no_agent.agent = nullptr;
  CHECK_THROWS_AS(run_policy(Policy::learned(), ss[0], no_agent, a), ConfigError);
}

TEST_CASE("action maps") {
  CHECK(scale_intensity(1, 6) == 42);
  CHECK(scale_intensity(4, 6) == 170);
  CHECK(scale_intensity(6, 6) == 255);

  const Fixture f;
  const auto ss = scenes(1);
  nn::Rng rng(3);
  const Raster local = export_action_map(Policy::local_only(), ss[0], f.ctx(), rng);
  for (double v : local.data) CHECK(v == 1.0);
  const Raster fixed = export_action_map(Policy::fixed_scale(4), ss[0], f.ctx(), rng);
  for (double v : fixed.data) CHECK(v == 4.0);

  const TileGrid g = build_grid(20, 20, 16, 16);
  const Raster m = action_map(g, std::vector<int>{1, 2, 3, 4});
  CHECK(m.at(0, 0, 0) == 1.0);
  CHECK(m.at(0, 19, 19) == 4.0);
  CHECK(m.at(0, 10, 10) == 4.0);
}

TEST_CASE("report table") {
  const Fixture f;
  const auto ss = scenes(1);
  std::vector<PolicyReport> reps = {evaluate_policy(Policy::local_only(), ss, f.ctx())};
  const std::string t = format_report_table(reps);
  CHECK(t.rfind("policy\truns\tmiou\tmiou_sd\tmf1\tmf1_sd\tscore\tscore_sd\treward\treward_sd\n", 0) == 0);
  CHECK(t.find("local-only\t1\t") != std::string::npos);
}
