// scale-agent: data generation, training phases, mapping and evaluation.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geoagent/baselines.hpp"
#include "geoagent/errors.hpp"
#include "geoagent/gradsuite.hpp"
#include "geoagent/metrics.hpp"
#include "geoagent/nn/checkpoint.hpp"
#include "geoagent/orchestrator.hpp"
#include "geoagent/raster_io.hpp"

namespace fs = std::filesystem;
using namespace geoagent;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value configuration file");
  cmd->add_option("--seed", c.seed, "run seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
}

RunConfig load_config(const Common& c, bool out_is_data = false) {
  KeyValueConfig kv = c.config.empty() ? KeyValueConfig::parse("", "<defaults>") : KeyValueConfig::load(c.config);
  if (c.seed) kv.set("seed", std::to_string(*c.seed));
  if (!c.out.empty()) kv.set(out_is_data ? "data_dir" : "out_dir", c.out);
  return RunConfig::from_kv(kv);
}

std::vector<std::shared_ptr<const Scene>> load_split(const RunConfig& cfg, const std::string& split) {
  if (split != "train" && split != "test") throw ConfigError("split must be train or test");
  const fs::path manifest = split == "train" ? cfg.train_manifest() : cfg.test_manifest();
  if (!fs::exists(manifest)) throw ConfigError("missing dataset manifest " + manifest.string());
  return load_scenes(read_manifest(manifest), cfg.seg.classes);
}

fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

PhaseControl control(std::optional<std::int64_t> stop_after, bool resume) {
  if (stop_after && *stop_after < 0) throw ConfigError("--stop-after must be >= 0");
  return PhaseControl{stop_after, resume};
}

void report_phase(const std::string& name, const PhaseResult& r, const RunConfig& cfg) {
  if (r.finished) {
    std::cout << name << ": finished after " << r.steps << " steps, outputs in " << cfg.out_dir.string() << "\n";
  } else {
    std::cout << name << ": stopped at step " << r.steps << ", state saved under " << cfg.out_dir.string() << "\n";
  }
}

Scene scene_by_id(const std::vector<std::shared_ptr<const Scene>>& scenes, const std::string& id) {
  for (const auto& s : scenes) {
    if (s->id == id) return *s;
  }
  throw ConfigError("no scene '" + id + "' in the dataset");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale-adaptive sliding-window segmentation with a learned scale agent"};
  app.require_subcommand(1);

  Common gen_c, pre_c, agent_c, joint_c, map_c, eval_c, ablate_c, export_c, grad_c;
  std::optional<std::int64_t> stop_after;
  bool resume = false;
  std::string seg_path, agent_path, raster_path, policy_text = "learned", split = "test", scene_id;

  auto* gen = app.add_subcommand("generate-data", "write the synthetic train and test scenes");
  add_common(gen, gen_c);
  std::optional<int> scenes;
  gen->add_option("--scenes", scenes, "number of training scenes (overrides train_scenes)");

  auto* pre = app.add_subcommand("pretrain", "pretrain the segmenter with random scales");
  add_common(pre, pre_c);
  pre->add_option("--stop-after", stop_after, "stop after this many steps and save the run state");
  pre->add_flag("--resume", resume, "continue from the saved run state");

  auto* agent = app.add_subcommand("train-agent", "train the scale agent against a frozen segmenter");
  add_common(agent, agent_c);
  agent->add_option("--seg", seg_path, "segmenter checkpoint (default <out>/seg.gack)");
  agent->add_option("--stop-after", stop_after, "stop after this many steps and save the run state");
  agent->add_flag("--resume", resume, "continue from the saved run state");

  auto* joint = app.add_subcommand("train-joint", "alternate segmenter and agent blocks");
  add_common(joint, joint_c);
  joint->add_option("--seg", seg_path, "segmenter checkpoint (default <out>/seg.gack)");
  joint->add_option("--agent", agent_path, "agent checkpoint (default <out>/agent.gack)");
  joint->add_option("--stop-after", stop_after, "stop after this many steps and save the run state");
  joint->add_flag("--resume", resume, "continue from the saved run state");

  auto* map = app.add_subcommand("map", "segment one raster with the learned policy");
  add_common(map, map_c);
  map->add_option("--raster", raster_path, "GATN raster [3,H,W]")->required();
  map->add_option("--seg", seg_path, "segmenter checkpoint (default <out>/seg.gack)");
  map->add_option("--agent", agent_path, "agent checkpoint (default <out>/agent.gack)");

  auto* eval = app.add_subcommand("eval", "score one policy on a dataset split");
  add_common(eval, eval_c);
  eval->add_option("--policy", policy_text,
                   "local-only | context-only:A | fixed:A | random:SEED | single-branch | learned | oracle");
  eval->add_option("--split", split, "train or test");
  std::string pred_path, truth_path;
  eval->add_option("--pred", pred_path, "score this label map against --truth instead of running a policy");
  eval->add_option("--truth", truth_path, "reference label map for --pred");
  eval->add_option("--seg", seg_path, "segmenter checkpoint (default <out>/seg.gack)");
  eval->add_option("--agent", agent_path, "agent checkpoint (default <out>/agent.gack)");

  auto* ablate = app.add_subcommand("ablate", "evaluate every ablation policy on the test split");
  add_common(ablate, ablate_c);
  ablate->add_option("--seg", seg_path, "segmenter checkpoint (default <out>/seg.gack)");
  ablate->add_option("--agent", agent_path, "agent checkpoint (default <out>/agent.gack)");

  auto* exp = app.add_subcommand("export-action-map", "paint a policy's chosen scales over a test scene");
  add_common(exp, export_c);
  exp->add_option("--policy", policy_text, "policy, as for eval");
  exp->add_option("--scene", scene_id, "scene id from the test manifest")->required();
  exp->add_option("--seg", seg_path, "segmenter checkpoint (default <out>/seg.gack)");
  exp->add_option("--agent", agent_path, "agent checkpoint (default <out>/agent.gack)");

  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every layer and network");
  add_common(grad, grad_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      RunConfig cfg = load_config(gen_c, true);
      if (scenes) {
        cfg.train_scenes = *scenes;
        cfg.validate();
      }
      const auto [train, test] = generate_data(cfg);
      std::cout << "wrote " << train.entries.size() << " train and " << test.entries.size() << " test scenes to "
                << cfg.data_dir.string() << "\n";
    } else if (*pre) {
      const RunConfig cfg = load_config(pre_c);
      Trainer trainer(cfg, load_split(cfg, "train"));
      report_phase("pretrain", trainer.pretrain(control(stop_after, resume)), cfg);
    } else if (*agent) {
      const RunConfig cfg = load_config(agent_c);
      Trainer trainer(cfg, load_split(cfg, "train"));
      if (!resume) {
        const SegNet net = load_segnet(cfg, or_default(seg_path, cfg.out_dir / "seg.gack"));
        nn::restore(trainer.seg().params(), nn::snapshot(net.params()));
      }
      report_phase("train-agent", trainer.train_agent(control(stop_after, resume)), cfg);
    } else if (*joint) {
      const RunConfig cfg = load_config(joint_c);
      Trainer trainer(cfg, load_split(cfg, "train"));
      if (!resume) {
        const SegNet net = load_segnet(cfg, or_default(seg_path, cfg.out_dir / "seg.gack"));
        const ScaleAgent ag = load_agent(cfg, or_default(agent_path, cfg.out_dir / "agent.gack"));
        nn::restore(trainer.seg().params(), nn::snapshot(net.params()));
        nn::restore(trainer.agent().params(), nn::snapshot(ag.params()));
      }
      report_phase("train-joint", trainer.train_joint(control(stop_after, resume)), cfg);
    } else if (*map) {
      const RunConfig cfg = load_config(map_c);
      const SegNet net = load_segnet(cfg, or_default(seg_path, cfg.out_dir / "seg.gack"));
      const ScaleAgent ag = load_agent(cfg, or_default(agent_path, cfg.out_dir / "agent.gack"));
      const Raster raster = read_raster(raster_path);
      const MapResult res = map_image(cfg, net, ag, raster);
      fs::create_directories(cfg.out_dir);
      write_labels(cfg.out_dir / "map.labels.gatn", res.labels);
      write_label_map(cfg.out_dir / "map.pgm", res.labels);
      write_raster(cfg.out_dir / "action_map.gatn", res.action_map);
      write_action_map(cfg.out_dir / "action_map.pgm", res.action_map, cfg.agent.actions);
      std::cout << "wrote map and action map for " << raster.height << "x" << raster.width << " raster to "
                << cfg.out_dir.string() << "\n";
    } else if (*eval && (!pred_path.empty() || !truth_path.empty())) {
      if (pred_path.empty() || truth_path.empty()) throw ConfigError("--pred and --truth go together");
      const RunConfig cfg = load_config(eval_c);
      const LabelMask pred = read_label_map(pred_path, cfg.seg.classes);
      const LabelMask truth = read_label_map(truth_path, cfg.seg.classes);
      const ConfusionMatrix cm = confusion(truth, pred, cfg.seg.classes);
      std::printf("mIoU %.4f\nmF1 %.4f\nscore %.4f\n", miou(cm), mf1(cm), score(cm));
    } else if (*eval) {
      const RunConfig cfg = load_config(eval_c);
      const Policy policy = Policy::parse(policy_text);
      const SegNet net = load_segnet(cfg, or_default(seg_path, cfg.out_dir / "seg.gack"));
      std::optional<ScaleAgent> ag;
      if (policy.needs_agent()) ag.emplace(load_agent(cfg, or_default(agent_path, cfg.out_dir / "agent.gack")));
      const auto scenes = load_split(cfg, split);
      const PolicyReport rep = evaluate_policy(policy, scenes, cfg.policy_context(net, ag ? &*ag : nullptr));
      std::printf("policy %s on %zu %s scenes\n", rep.policy.c_str(), scenes.size(), split.c_str());
      std::printf("mIoU %.4f\nmF1 %.4f\nscore %.4f\nmean episode reward %.4f\n", rep.mean.miou, rep.mean.mf1,
                  rep.mean.score, rep.mean.episode_reward);
      if (rep.runs.size() > 1) {
        std::printf("sd over %zu runs: mIoU %.4f mF1 %.4f score %.4f reward %.4f\n", rep.runs.size(), rep.sd.miou,
                    rep.sd.mf1, rep.sd.score, rep.sd.episode_reward);
      }
    } else if (*ablate) {
      const RunConfig cfg = load_config(ablate_c);
      const SegNet net = load_segnet(cfg, or_default(seg_path, cfg.out_dir / "seg.gack"));
      const ScaleAgent ag = load_agent(cfg, or_default(agent_path, cfg.out_dir / "agent.gack"));
      const auto scenes = load_split(cfg, "test");
      const PolicyContext ctx = cfg.policy_context(net, &ag);
      std::vector<Policy> policies{Policy::local_only()};
      for (int a = 2; a <= cfg.agent.actions; ++a) policies.push_back(Policy::context_only(a));
      for (int a = 2; a <= cfg.agent.actions; ++a) policies.push_back(Policy::fixed_scale(a));
      policies.push_back(Policy::random_scale(nn::stream_seed(cfg.seed, "ablate/random")));
      policies.push_back(Policy::single_branch());
      policies.push_back(Policy::learned());
      policies.push_back(Policy::oracle());
      std::vector<PolicyReport> reports;
      for (const auto& p : policies) reports.push_back(evaluate_policy(p, scenes, ctx));
      std::cout << format_report_table(reports);
    } else if (*exp) {
      const RunConfig cfg = load_config(export_c);
      const Policy policy = Policy::parse(policy_text);
      const SegNet net = load_segnet(cfg, or_default(seg_path, cfg.out_dir / "seg.gack"));
      std::optional<ScaleAgent> ag;
      if (policy.needs_agent()) ag.emplace(load_agent(cfg, or_default(agent_path, cfg.out_dir / "agent.gack")));
      const auto scene = std::make_shared<const Scene>(scene_by_id(load_split(cfg, "test"), scene_id));
      nn::Rng rng(policy.seed);
      const Raster amap = export_action_map(policy, scene, cfg.policy_context(net, ag ? &*ag : nullptr), rng);
      fs::create_directories(cfg.out_dir);
      std::string stem = "action_map_" + scene_id + "_" + policy.name();
      for (char& ch : stem) {
        if (ch == ':') ch = '-';
      }
      const fs::path out = cfg.out_dir / (stem + ".pgm");
      write_action_map(out, amap, cfg.agent.actions);
      std::cout << "wrote " << out.string() << "\n";
    } else if (*grad) {
      const RunConfig cfg = load_config(grad_c);
      bool ok = true;
      for (const auto& e : run_gradient_suite(cfg.seed)) {
        const bool pass = e.result.max_rel_error <= 1e-4;
        ok = ok && pass;
        std::printf("%-28s max rel error %.3e at %s  %s\n", e.name.c_str(), e.result.max_rel_error,
                    e.result.worst_entry.c_str(), pass ? "ok" : "FAIL");
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "scale-agent: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
