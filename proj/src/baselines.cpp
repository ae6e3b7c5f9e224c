#include "geoagent/baselines.hpp"

#include <cmath>
#include <sstream>

#include "geoagent/errors.hpp"
#include "geoagent/raster_io.hpp"

namespace geoagent {

namespace {

int parse_int(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError("bad " + what + " '" + text + "'");
  return v;
}

void check_scale(const Policy& p, int actions) {
  if (p.scale < 1 || p.scale > actions) {
    throw ConfigError(p.name() + ": scale must lie in [1, " + std::to_string(actions) + "]");
  }
}

std::vector<int> greedy_actions(const ScaleAgent& agent, const MappingEpisode& env) {
  std::vector<BinaryMask> masks;
  masks.reserve(env.length());
  for (const PatchSpec& p : env.grid().patches) {
    masks.push_back(make_position_mask(p, {env.scene().raster.height, env.scene().raster.width},
                                       {env.thumbnail()->height, env.thumbnail()->width}));
  }
  const auto outs = agent.forward(*env.thumbnail(), masks);
  std::vector<int> actions;
  actions.reserve(outs.size());
  nn::Rng unused;
  for (const auto& o : outs) actions.push_back(select_action(o, ActionMode::Greedy, unused));
  return actions;
}

SceneResult mean_of(std::span<const SceneResult> rows) {
  SceneResult m;
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.miou += r.miou;
    m.mf1 += r.mf1;
    m.score += r.score;
    m.episode_reward += r.episode_reward;
  }
  const double n = static_cast<double>(rows.size());
  m.miou /= n;
  m.mf1 /= n;
  m.score /= n;
  m.episode_reward /= n;
  return m;
}

}  // namespace

Policy Policy::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto no_arg = [&](Policy p) {
    if (colon != std::string::npos) throw ConfigError("policy '" + head + "' takes no argument");
    return p;
  };
  if (head == "local-only") return no_arg(local_only());
  if (head == "single-branch") return no_arg(single_branch());
  if (head == "learned") return no_arg(learned());
  if (head == "oracle") return no_arg(oracle());
  if (head == "context-only") return context_only(parse_int(arg, "context-only scale"));
  if (head == "fixed") return fixed_scale(parse_int(arg, "fixed scale"));
  if (head == "random") {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(arg, &used);
      if (used == arg.size()) return random_scale(seed);
    } catch (const std::exception&) {
    }
    throw ConfigError("bad random seed '" + arg + "'");
  }
  throw ConfigError("unknown policy '" + text + "'");
}

std::string Policy::name() const {
  switch (kind) {
    case Kind::LocalOnly: return "local-only";
    case Kind::ContextOnly: return "context-only:" + std::to_string(scale);
    case Kind::FixedScale: return "fixed:" + std::to_string(scale);
    case Kind::RandomScale: return "random";
    case Kind::SingleBranch: return "single-branch";
    case Kind::Learned: return "learned";
    case Kind::OracleScale: return "oracle";
  }
  return "?";
}

BranchMode Policy::branch() const {
  return (kind == Kind::ContextOnly || kind == Kind::SingleBranch) ? BranchMode::SingleBranch
                                                                   : BranchMode::Dual;
}

MappingEpisode run_policy(const Policy& policy, std::shared_ptr<const Scene> scene, const PolicyContext& ctx,
                          nn::Rng& rng) {
  if (ctx.net == nullptr) throw ConfigError("evaluation needs a segmenter");
  if (policy.needs_agent() && ctx.agent == nullptr) {
    throw ConfigError("policy " + policy.name() + " needs an agent checkpoint");
  }
  if (policy.kind == Policy::Kind::ContextOnly || policy.kind == Policy::Kind::FixedScale) {
    check_scale(policy, ctx.actions);
  }
  MappingEpisode env(std::move(scene), *ctx.net, ctx.geometry, ctx.actions, policy.branch());
  switch (policy.kind) {
    case Policy::Kind::LocalOnly:
    case Policy::Kind::ContextOnly:
    case Policy::Kind::FixedScale:
      while (!env.done()) env.step(policy.scale);
      break;
    case Policy::Kind::RandomScale:
      while (!env.done()) env.step(nn::uniform_int(rng, 1, ctx.actions));
      break;
    case Policy::Kind::SingleBranch:
    case Policy::Kind::Learned:
      for (int a : greedy_actions(*ctx.agent, env)) env.step(a);
      break;
    case Policy::Kind::OracleScale:
      while (!env.done()) {
        int best = 1;
        double best_r = env.preview_reward(1);
        for (int a = 2; a <= ctx.actions; ++a) {
          const double r = env.preview_reward(a);
          if (r > best_r) {
            best_r = r;
            best = a;
          }
        }
        env.step(best);
      }
      break;
  }
  return env;
}

PolicyReport evaluate_policy(const Policy& policy, std::span<const std::shared_ptr<const Scene>> scenes,
                             const PolicyContext& ctx, int random_runs) {
  if (random_runs < 1) throw ConfigError("random_runs must be >= 1");
  PolicyReport report;
  report.policy = policy.name();
  const int runs = policy.kind == Policy::Kind::RandomScale ? random_runs : 1;
  for (int i = 0; i < runs; ++i) {
    RunSummary run;
    run.seed = policy.kind == Policy::Kind::RandomScale
                   ? nn::stream_seed(policy.seed, "random-run/" + std::to_string(i))
                   : 0;
    nn::Rng rng(run.seed);
    for (const auto& scene : scenes) {
      const MappingEpisode env = run_policy(policy, scene, ctx, rng);
      const ConfusionMatrix cm = confusion(scene->labels, env.final_map(), scene->labels.classes);
      SceneResult r{scene->id, miou(cm), mf1(cm), 0.0, env.episode_reward()};
      r.score = r.miou + r.mf1;
      run.scenes.push_back(r);
    }
    run.mean = mean_of(run.scenes);
    report.runs.push_back(std::move(run));
  }
  std::vector<SceneResult> means;
  for (const auto& r : report.runs) means.push_back(r.mean);
  report.mean = mean_of(means);
  if (means.size() > 1) {
    auto sd = [&](double SceneResult::*field) {
      double ss = 0.0;
      for (const auto& m : means) ss += (m.*field - report.mean.*field) * (m.*field - report.mean.*field);
      return std::sqrt(ss / static_cast<double>(means.size() - 1));
    };
    report.sd.miou = sd(&SceneResult::miou);
    report.sd.mf1 = sd(&SceneResult::mf1);
    report.sd.score = sd(&SceneResult::score);
    report.sd.episode_reward = sd(&SceneResult::episode_reward);
  }
  return report;
}

std::string format_report_table(std::span<const PolicyReport> reports) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << "policy\truns\tmiou\tmiou_sd\tmf1\tmf1_sd\tscore\tscore_sd\treward\treward_sd\n";
  for (const auto& r : reports) {
    os << r.policy << "\t" << r.runs.size() << "\t" << r.mean.miou << "\t" << r.sd.miou << "\t" << r.mean.mf1
       << "\t" << r.sd.mf1 << "\t" << r.mean.score << "\t" << r.sd.score << "\t" << r.mean.episode_reward
       << "\t" << r.sd.episode_reward << "\n";
  }
  return os.str();
}

Raster action_map(const TileGrid& grid, std::span<const int> actions) {
  if (actions.size() != grid.T()) {
    throw DimensionError("action map: " + std::to_string(actions.size()) + " actions for " +
                         std::to_string(grid.T()) + " patches");
  }
  Raster map(1, grid.raster_height, grid.raster_width);
  for (std::size_t t = 0; t < grid.T(); ++t) {
    const PatchSpec& p = grid.patches[t];
    for (int r = p.row; r < p.row + p.h; ++r) {
      for (int c = p.col; c < p.col + p.w; ++c) map.at(0, r, c) = actions[t];
    }
  }
  return map;
}

int scale_intensity(int scale, int actions) { return 255 * scale / actions; }

void write_action_map(const std::filesystem::path& path, const Raster& map, int actions) {
  Raster gray(1, map.height, map.width);
  for (std::size_t i = 0; i < map.data.size(); ++i) {
    const int a = static_cast<int>(map.data[i]);
    if (a < 1 || a > actions) throw DimensionError("action map holds scale " + std::to_string(a));
    gray.data[i] = scale_intensity(a, actions) / 255.0;
  }
  write_pnm(path, gray);
}

Raster export_action_map(const Policy& policy, std::shared_ptr<const Scene> scene, const PolicyContext& ctx,
                         nn::Rng& rng) {
  const MappingEpisode env = run_policy(policy, std::move(scene), ctx, rng);
  return action_map(env.grid(), env.actions_taken());
}

}  // namespace geoagent
