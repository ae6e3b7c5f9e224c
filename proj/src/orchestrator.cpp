#include "geoagent/orchestrator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "geoagent/errors.hpp"
#include "geoagent/nn/checkpoint.hpp"
#include "geoagent/raster_io.hpp"

namespace geoagent {

namespace {

constexpr std::size_t kRewardWindow = 10;

nn::OptimizerConfig read_opt(const KeyValueConfig& kv, const std::string& prefix, nn::OptimizerConfig o) {
  o.lr = kv.get_double(prefix + ".lr", o.lr);
  o.momentum = kv.get_double(prefix + ".momentum", o.momentum);
  o.decay = kv.get_double(prefix + ".decay", o.decay);
  o.decay_every = kv.get_int(prefix + ".decay_every", o.decay_every);
  o.max_grad_norm = kv.get_double(prefix + ".max_grad_norm", o.max_grad_norm);
  return o;
}

int as_int(std::int64_t v, const std::string& key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key + " is out of range");
  }
  return static_cast<int>(v);
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_log(const std::filesystem::path& path, bool append, const std::string& header) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot open log " + path.string());
  if (!append) out << header << "\n";
  return out;
}

void save_ckpt(const std::filesystem::path& path, const nn::ParameterStore& store) {
  nn::save_checkpoint(path, nn::snapshot(store));
}

}  // namespace

std::uint64_t seg_init_seed(std::uint64_t seed) { return nn::stream_seed(seed, "init/seg"); }
std::uint64_t agent_init_seed(std::uint64_t seed) { return nn::stream_seed(seed, "init/agent"); }

PolicyContext RunConfig::policy_context(const SegNet& net, const ScaleAgent* agent_ptr) const {
  return PolicyContext{&net, agent_ptr, geometry, agent.actions};
}

void RunConfig::validate() const {
  if (train_scenes < 0 || test_scenes < 0) throw ConfigError("scene counts must be >= 0");
  if (pretrain_steps < 0 || agent_steps < 0 || joint_steps < 0) throw ConfigError("step counts must be >= 0");
  if (joint_interval < 1) throw ConfigError("joint_interval must be >= 1");
  if (pretrain_batch < 1) throw ConfigError("pretrain_batch must be >= 1");
  if (agent_envs < 1) throw ConfigError("agent_envs must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (geometry.thumb_h < 8 || geometry.thumb_w < 8) throw ConfigError("thumbnail must be at least 8x8");
  if (seg.classes < 2) throw ConfigError("seg.classes must be >= 2");
  if (seg.in_channels != 3 || agent.in_channels != 3) throw ConfigError("rasters have 3 channels");
  seg.validate(geometry.patch_h, geometry.patch_w);
  agent.validate();
  seg_opt.validate();
  agent_opt.validate();
  if ((joint_seg_lr && !(*joint_seg_lr > 0.0)) || (joint_agent_lr && !(*joint_agent_lr > 0.0))) {
    throw ConfigError("joint learning rates must be > 0");
  }
  scene.validate();
  if (scene.height < geometry.patch_h || scene.width < geometry.patch_w) {
    throw ConfigError("scenes are smaller than one patch");
  }
}

RunConfig RunConfig::from_kv(const KeyValueConfig& kv) {
  RunConfig c;
  c.seed = kv.get_u64("seed", c.seed);
  c.data_dir = kv.get_string("data_dir", c.data_dir.string());
  c.out_dir = kv.get_string("out_dir", c.out_dir.string());
  c.train_scenes = as_int(kv.get_int("train_scenes", c.train_scenes), "train_scenes");
  c.test_scenes = as_int(kv.get_int("test_scenes", c.test_scenes), "test_scenes");

  c.geometry.patch_h = as_int(kv.get_int("patch_h", c.geometry.patch_h), "patch_h");
  c.geometry.patch_w = as_int(kv.get_int("patch_w", c.geometry.patch_w), "patch_w");
  c.geometry.thumb_h = as_int(kv.get_int("thumb_h", c.geometry.thumb_h), "thumb_h");
  c.geometry.thumb_w = as_int(kv.get_int("thumb_w", c.geometry.thumb_w), "thumb_w");

  SceneConfig& s = c.scene;
  s.height = as_int(kv.get_int("scene.height", s.height), "scene.height");
  s.width = as_int(kv.get_int("scene.width", s.width), "scene.width");
  s.patch_hint = as_int(kv.get_int("scene.patch_hint", c.geometry.patch_h), "scene.patch_hint");
  s.ponds.min = as_int(kv.get_int("scene.ponds_min", s.ponds.min), "scene.ponds_min");
  s.ponds.max = as_int(kv.get_int("scene.ponds_max", s.ponds.max), "scene.ponds_max");
  s.large_water.min = as_int(kv.get_int("scene.large_water_min", s.large_water.min), "scene.large_water_min");
  s.large_water.max = as_int(kv.get_int("scene.large_water_max", s.large_water.max), "scene.large_water_max");
  s.built.min = as_int(kv.get_int("scene.built_min", s.built.min), "scene.built_min");
  s.built.max = as_int(kv.get_int("scene.built_max", s.built.max), "scene.built_max");
  s.noise = kv.get_double("scene.noise", s.noise);
  s.max_retries = as_int(kv.get_int("scene.max_retries", s.max_retries), "scene.max_retries");

  c.seg.classes = as_int(kv.get_int("seg.classes", c.seg.classes), "seg.classes");
  c.seg.widths = kv.get_int_list("seg.widths", c.seg.widths);
  c.seg.fusion_channels = as_int(kv.get_int("seg.fusion_channels", c.seg.fusion_channels), "seg.fusion_channels");
  c.seg.aux_weight = kv.get_double("seg.aux_weight", c.seg.aux_weight);
  c.seg_opt = read_opt(kv, "seg", c.seg_opt);

  c.agent.actions = as_int(kv.get_int("agent.actions", c.agent.actions), "agent.actions");
  c.agent.gamma = kv.get_double("agent.gamma", c.agent.gamma);
  c.agent.n_steps = as_int(kv.get_int("agent.n_steps", c.agent.n_steps), "agent.n_steps");
  c.agent.value_coef = kv.get_double("agent.value_coef", c.agent.value_coef);
  c.agent.entropy_coef = kv.get_double("agent.entropy_coef", c.agent.entropy_coef);
  c.agent.widths = kv.get_int_list("agent.widths", c.agent.widths);
  c.agent.hidden = as_int(kv.get_int("agent.hidden", c.agent.hidden), "agent.hidden");
  c.agent.feature_indexing = kv.get_bool("agent.feature_indexing", c.agent.feature_indexing);
  c.agent_opt = read_opt(kv, "agent", c.agent_opt);

  c.pretrain_steps = kv.get_int("pretrain_steps", c.pretrain_steps);
  c.pretrain_batch = as_int(kv.get_int("pretrain_batch", c.pretrain_batch), "pretrain_batch");
  c.agent_steps = kv.get_int("agent_steps", c.agent_steps);
  c.agent_envs = as_int(kv.get_int("agent_envs", c.agent_envs), "agent_envs");
  c.joint_steps = kv.get_int("joint_steps", c.joint_steps);
  c.joint_interval = kv.get_int("joint_interval", c.joint_interval);
  c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
  if (kv.has("joint.seg_lr")) c.joint_seg_lr = kv.get_double("joint.seg_lr", 0.0);
  if (kv.has("joint.agent_lr")) c.joint_agent_lr = kv.get_double("joint.agent_lr", 0.0);

  kv.reject_unknown();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from_kv(KeyValueConfig::load(path)); }

std::pair<Manifest, Manifest> generate_data(const RunConfig& cfg) {
  SceneConfig train = cfg.scene;
  train.seed = nn::stream_seed(cfg.seed, "data/train");
  SceneConfig test = cfg.scene;
  test.seed = nn::stream_seed(cfg.seed, "data/test");
  return {generate_dataset(train, cfg.train_scenes, cfg.data_dir / "train"),
          generate_dataset(test, cfg.test_scenes, cfg.data_dir / "test")};
}

std::string phase_name(Phase phase) {
  switch (phase) {
    case Phase::Pretrain: return "pretrain";
    case Phase::Agent: return "agent";
    case Phase::Joint: return "joint";
  }
  return "?";
}

Trainer::Trainer(RunConfig cfg, std::vector<std::shared_ptr<const Scene>> train_scenes)
    : cfg_(std::move(cfg)),
      scenes_(std::move(train_scenes)),
      seg_(cfg_.seg, seg_init_seed(cfg_.seed)),
      agent_(cfg_.agent, agent_init_seed(cfg_.seed)) {
  cfg_.validate();
  if (scenes_.empty()) throw ConfigError("training needs at least one scene");
  for (const auto& s : scenes_) {
    if (s->raster.height < cfg_.geometry.patch_h || s->raster.width < cfg_.geometry.patch_w) {
      throw DimensionError("scene " + s->id + " is smaller than one patch");
    }
  }
  thumbnails_.resize(scenes_.size());
}

const std::shared_ptr<const Raster>& Trainer::thumbnail(std::size_t scene) {
  if (!thumbnails_[scene]) {
    thumbnails_[scene] = std::make_shared<const Raster>(
        make_thumbnail(scenes_[scene]->raster, cfg_.geometry.thumb_h, cfg_.geometry.thumb_w));
  }
  return thumbnails_[scene];
}

std::size_t Trainer::next_scene() {
  if (cursor_ >= order_.size()) {
    order_.resize(scenes_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(nn::uniform_int(data_rng_, 0, static_cast<int>(i - 1)));
      std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
  }
  return order_[cursor_++];
}

std::pair<PatchSpec, std::size_t> Trainer::sample_pretrain_patch() {
  const auto scene = static_cast<std::size_t>(nn::uniform_int(data_rng_, 0, static_cast<int>(scenes_.size()) - 1));
  const Raster& r = scenes_[scene]->raster;
  PatchSpec p;
  p.h = cfg_.geometry.patch_h;
  p.w = cfg_.geometry.patch_w;
  p.row = nn::uniform_int(data_rng_, 0, r.height - p.h);
  p.col = nn::uniform_int(data_rng_, 0, r.width - p.w);
  p.scale = nn::uniform_int(data_rng_, 1, cfg_.agent.actions);
  return {p, scene};
}

std::pair<PatchSpec, std::size_t> Trainer::sample_agent_patch() {
  const auto scene = static_cast<std::size_t>(nn::uniform_int(data_rng_, 0, static_cast<int>(scenes_.size()) - 1));
  const Raster& r = scenes_[scene]->raster;
  const TileGrid grid = build_grid(r, cfg_.geometry.patch_h, cfg_.geometry.patch_w);
  PatchSpec p = grid.patches[static_cast<std::size_t>(nn::uniform_int(data_rng_, 0, static_cast<int>(grid.T()) - 1))];
  const State st{thumbnail(scene), make_position_mask(p, {r.height, r.width},
                                                      {cfg_.geometry.thumb_h, cfg_.geometry.thumb_w})};
  p.scale = select_action(agent_.evaluate(st), ActionMode::Sample, action_rng_);
  return {p, scene};
}

double Trainer::seg_update(const std::vector<std::pair<PatchSpec, std::size_t>>& batch) {
  seg_.params().zero_grad();
  double loss = 0.0;
  for (const auto& [p, scene_idx] : batch) {
    const Scene& scene = *scenes_[scene_idx];
    const std::pair<int, int> hw{scene.raster.height, scene.raster.width};
    SegTrace trace;
    const Raster local = extract_local(scene.raster, p);
    const LabelMask y = extract_local(scene.labels, p);
    if (p.scale == 1) {
      seg_.forward(local, nullptr, 1, p, hw, &trace);
      loss += seg_.backward(trace, y, nullptr).total;
    } else {
      const Raster context = extract_context(scene.raster, p, p.scale);
      const LabelMask y_ctx = extract_context_labels(scene.labels, p, p.scale);
      seg_.forward(local, &context, p.scale, p, hw, &trace);
      loss += seg_.backward(trace, y, &y_ctx).total;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto params = seg_.params().all();
  for (auto* prm : params) {
    for (double& g : prm->value.grad()) g *= inv;
  }
  const nn::OptimizerConfig opt = seg_opt();
  if (opt.max_grad_norm > 0.0) nn::clip_grad_norm(params, opt.max_grad_norm);
  nn::sgd_step(params, opt, seg_updates_++);
  return loss * inv;
}

A2CLosses Trainer::agent_update() {
  const AgentConfig& ac = cfg_.agent;
  if (envs_.empty()) envs_.resize(static_cast<std::size_t>(cfg_.agent_envs));
  std::vector<Transition> all;
  std::vector<double> targets;
  for (EnvSlot& e : envs_) {
    std::vector<Transition> segment;
    for (int i = 0; i < ac.n_steps; ++i) {
      if (!e.episode || e.episode->done()) {
        e.scene = next_scene();
        e.episode = std::make_unique<MappingEpisode>(scenes_[e.scene], seg_, cfg_.geometry, ac.actions);
      }
      Transition tr;
      tr.state = e.episode->observe();
      const AgentOutput out = agent_.evaluate(tr.state);
      tr.action = select_action(out, ActionMode::Sample, action_rng_);
      tr.value = out.value;
      tr.probs = out.probs;
      tr.log_prob = std::log(std::max(out.probs[tr.action - 1], 1e-300));
      const StepResult res = e.episode->step(tr.action);
      tr.reward = res.reward;
      tr.done = res.done;
      if (res.done) {
        recent_rewards_.push_back(e.episode->episode_reward());
        if (recent_rewards_.size() > kRewardWindow) recent_rewards_.pop_front();
        ++episodes_done_;
      }
      segment.push_back(std::move(tr));
    }
    const double boot = segment.back().done ? 0.0 : agent_.evaluate(e.episode->observe()).value;
    const auto t = td_targets(segment, ac.gamma, ac.n_steps, boot);
    all.insert(all.end(), std::make_move_iterator(segment.begin()), std::make_move_iterator(segment.end()));
    targets.insert(targets.end(), t.begin(), t.end());
  }
  agent_.params().zero_grad();
  const A2CLosses losses = accumulate_a2c_gradients(agent_, all, targets);
  auto params = agent_.params().all();
  const nn::OptimizerConfig opt = agent_opt();
  if (opt.max_grad_norm > 0.0) nn::clip_grad_norm(params, opt.max_grad_norm);
  nn::sgd_step(params, opt, agent_updates_++);
  return losses;
}

void Trainer::log_agent_row(std::ofstream& log, std::int64_t step, const A2CLosses& l) const {
  double mean = std::nan("");
  if (!recent_rewards_.empty()) {
    mean = std::accumulate(recent_rewards_.begin(), recent_rewards_.end(), 0.0) /
           static_cast<double>(recent_rewards_.size());
  }
  log << step << "," << fmt(mean) << "," << fmt(l.policy) << "," << fmt(l.value) << "," << fmt(l.entropy) << "\n";
}

nn::OptimizerConfig Trainer::seg_opt() const {
  nn::OptimizerConfig o = cfg_.seg_opt;
  if (phase_ == Phase::Joint && cfg_.joint_seg_lr) o.lr = *cfg_.joint_seg_lr;
  return o;
}

nn::OptimizerConfig Trainer::agent_opt() const {
  nn::OptimizerConfig o = cfg_.agent_opt;
  if (phase_ == Phase::Joint && cfg_.joint_agent_lr) o.lr = *cfg_.joint_agent_lr;
  return o;
}

std::filesystem::path Trainer::state_dir() const { return cfg_.out_dir / (phase_name(phase_) + "_state"); }

PhaseResult Trainer::pretrain(const PhaseControl& ctl) { return run_phase(Phase::Pretrain, ctl); }
PhaseResult Trainer::train_agent(const PhaseControl& ctl) { return run_phase(Phase::Agent, ctl); }
PhaseResult Trainer::train_joint(const PhaseControl& ctl) { return run_phase(Phase::Joint, ctl); }

PhaseResult Trainer::run_phase(Phase phase, const PhaseControl& ctl) {
  std::filesystem::create_directories(cfg_.out_dir);
  phase_ = phase;
  if (ctl.resume) {
    load_state(state_dir());
    if (phase_ != phase) throw ConfigError("saved run state belongs to phase " + phase_name(phase_));
  } else {
    step_ = 0;
    seg_updates_ = 0;
    agent_updates_ = 0;
    data_rng_ = nn::make_stream(cfg_.seed, phase_name(phase) + "/data");
    action_rng_ = nn::make_stream(cfg_.seed, phase_name(phase) + "/actions");
    order_.clear();
    cursor_ = 0;
    envs_.clear();
    recent_rewards_.clear();
    episodes_done_ = 0;
    // Each phase starts from parameters only, as when launched from checkpoints.
    for (nn::ParameterStore* store : {&seg_.params(), &agent_.params()}) {
      for (nn::Parameter* p : store->all()) p->momentum.assign(p->value.size(), 0.0);
    }
  }
  const bool append = ctl.resume;
  const std::string agent_header = "step,mean_episode_reward,L_policy,L_value,entropy";
  std::ofstream seg_log, agent_log;
  std::int64_t budget = 0;
  switch (phase) {
    case Phase::Pretrain:
      seg_log = open_log(cfg_.out_dir / "pretrain_log.csv", append, "step,loss");
      budget = cfg_.pretrain_steps;
      break;
    case Phase::Agent:
      agent_log = open_log(cfg_.out_dir / "agent_log.csv", append, agent_header);
      budget = cfg_.agent_steps;
      break;
    case Phase::Joint:
      seg_log = open_log(cfg_.out_dir / "joint_seg_log.csv", append, "step,loss");
      agent_log = open_log(cfg_.out_dir / "joint_agent_log.csv", append, agent_header);
      budget = cfg_.joint_steps;
      break;
  }
  const std::int64_t agent_unit = static_cast<std::int64_t>(cfg_.agent_envs) * cfg_.agent.n_steps;
  bool stopped = false;
  while (step_ < budget) {
    if (ctl.stop_after && step_ >= *ctl.stop_after) {
      stopped = true;
      break;
    }
    const std::int64_t before = step_;
    bool seg_block = phase == Phase::Pretrain;
    if (phase == Phase::Joint) {
      // Blocks alternate segmenter, agent, segmenter, ...; each spans
      // joint_interval steps and ends on an update boundary.
      seg_block = (step_ / cfg_.joint_interval) % 2 == 0;
    }
    if (phase == Phase::Agent || (phase == Phase::Joint && !seg_block)) {
      const A2CLosses l = agent_update();
      step_ += agent_unit;
      if (phase == Phase::Joint) {
        // Keep the block boundary aligned so the next block starts on schedule.
        const std::int64_t block_end = (before / cfg_.joint_interval + 1) * cfg_.joint_interval;
        if (step_ > block_end) step_ = block_end;
      }
      log_agent_row(agent_log, step_, l);
    } else {
      std::vector<std::pair<PatchSpec, std::size_t>> batch;
      for (int i = 0; i < cfg_.pretrain_batch; ++i) {
        batch.push_back(phase == Phase::Pretrain ? sample_pretrain_patch() : sample_agent_patch());
      }
      const double loss = seg_update(batch);
      ++step_;
      seg_log << step_ << "," << fmt(loss) << "\n";
    }
    if (cfg_.checkpoint_every > 0 && before / cfg_.checkpoint_every != step_ / cfg_.checkpoint_every) {
      seg_log.flush();
      agent_log.flush();
      save_state(state_dir());
    }
  }
  seg_log.flush();
  agent_log.flush();
  if (stopped) {
    save_state(state_dir());
    return {step_, false};
  }
  switch (phase) {
    case Phase::Pretrain: save_ckpt(cfg_.out_dir / "seg.gack", seg_.params()); break;
    case Phase::Agent: save_ckpt(cfg_.out_dir / "agent.gack", agent_.params()); break;
    case Phase::Joint:
      save_ckpt(cfg_.out_dir / "seg_joint.gack", seg_.params());
      save_ckpt(cfg_.out_dir / "agent_joint.gack", agent_.params());
      break;
  }
  return {step_, true};
}

namespace {

nn::Checkpoint with_momentum(const nn::ParameterStore& store) {
  nn::Checkpoint ck = nn::snapshot(store);
  const nn::Checkpoint m = nn::snapshot(store, true);
  ck.insert(ck.end(), m.begin(), m.end());
  return ck;
}

}  // namespace

void Trainer::save_state(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["phase"] = phase_name(phase_);
  j["step"] = step_;
  j["seg_updates"] = seg_updates_;
  j["agent_updates"] = agent_updates_;
  j["data_rng"] = nn::save_rng(data_rng_);
  j["action_rng"] = nn::save_rng(action_rng_);
  j["order"] = order_;
  j["cursor"] = cursor_;
  j["episodes_done"] = episodes_done_;
  std::vector<std::uint64_t> rewards;
  for (double r : recent_rewards_) rewards.push_back(std::bit_cast<std::uint64_t>(r));
  j["recent_rewards_bits"] = rewards;
  nn::Checkpoint episodes;
  nlohmann::json envs = nlohmann::json::array();
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    const EnvSlot& e = envs_[i];
    const bool active = e.episode && !e.episode->done();
    envs.push_back({{"scene", e.scene}, {"active", active}});
    if (active) e.episode->export_state(episodes, "env" + std::to_string(i) + "/");
  }
  j["envs"] = envs;
  const std::string text = j.dump(1);
  write_file_atomic(dir / "state.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  nn::save_checkpoint(dir / "seg.gack", with_momentum(seg_.params()));
  nn::save_checkpoint(dir / "agent.gack", with_momentum(agent_.params()));
  nn::save_checkpoint(dir / "episodes.gack", episodes);
}

void Trainer::load_state(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "state.json")) throw ConfigError("no saved run state in " + dir.string());
  const auto bytes = read_file_bytes(dir / "state.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
    const std::string phase = j.at("phase").get<std::string>();
    if (phase == "pretrain") {
      phase_ = Phase::Pretrain;
    } else if (phase == "agent") {
      phase_ = Phase::Agent;
    } else if (phase == "joint") {
      phase_ = Phase::Joint;
    } else {
      throw IoError("unknown phase '" + phase + "'");
    }
    step_ = j.at("step").get<std::int64_t>();
    seg_updates_ = j.at("seg_updates").get<std::int64_t>();
    agent_updates_ = j.at("agent_updates").get<std::int64_t>();
    nn::load_rng(data_rng_, j.at("data_rng").get<std::string>());
    nn::load_rng(action_rng_, j.at("action_rng").get<std::string>());
    order_ = j.at("order").get<std::vector<std::size_t>>();
    cursor_ = j.at("cursor").get<std::size_t>();
    episodes_done_ = j.at("episodes_done").get<std::int64_t>();
    recent_rewards_.clear();
    for (auto bits : j.at("recent_rewards_bits").get<std::vector<std::uint64_t>>()) {
      recent_rewards_.push_back(std::bit_cast<double>(bits));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(dir.string() + "/state.json: " + e.what());
  }
  for (std::size_t s : order_) {
    if (s >= scenes_.size()) throw IoError("run state refers to scene " + std::to_string(s));
  }
  for (auto [store, file] : {std::pair{&seg_.params(), "seg.gack"}, std::pair{&agent_.params(), "agent.gack"}}) {
    const nn::Checkpoint ck = nn::load_checkpoint(dir / file);
    nn::restore(*store, ck);
    nn::restore(*store, ck, true);
  }
  const nn::Checkpoint episodes = nn::load_checkpoint(dir / "episodes.gack");
  envs_.clear();
  for (const auto& ej : j.at("envs")) {
    EnvSlot e;
    e.scene = ej.at("scene").get<std::size_t>();
    if (e.scene >= scenes_.size()) throw IoError("run state refers to scene " + std::to_string(e.scene));
    if (ej.at("active").get<bool>()) {
      e.episode = std::make_unique<MappingEpisode>(scenes_[e.scene], seg_, cfg_.geometry, cfg_.agent.actions);
      e.episode->import_state(episodes, "env" + std::to_string(envs_.size()) + "/");
    }
    envs_.push_back(std::move(e));
  }
}

MapResult map_image(const RunConfig& cfg, const SegNet& net, const ScaleAgent& agent, const Raster& raster) {
  const EpisodeGeometry& g = cfg.geometry;
  const TileGrid grid = build_grid(raster, g.patch_h, g.patch_w);
  const Raster thumb = make_thumbnail(raster, g.thumb_h, g.thumb_w);
  std::vector<BinaryMask> masks;
  for (const auto& p : grid.patches) {
    masks.push_back(make_position_mask(p, {raster.height, raster.width}, {g.thumb_h, g.thumb_w}));
  }
  MapResult out;
  nn::Rng unused;
  for (const auto& o : agent.forward(thumb, masks)) out.actions.push_back(select_action(o, ActionMode::Greedy, unused));
  std::vector<PatchPrediction> preds;
  for (std::size_t t = 0; t < grid.T(); ++t) {
    PatchSpec p = grid.patches[t];
    p.scale = out.actions[t];
    preds.push_back(PatchPrediction{p, predict_patch(net, raster, p, p.scale, BranchMode::Dual)});
  }
  out.labels = stitch(preds, raster.height, raster.width);
  out.labels.classes = cfg.seg.classes;
  out.action_map = action_map(grid, out.actions);
  return out;
}

SegNet load_segnet(const RunConfig& cfg, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing segmenter checkpoint " + path.string());
  SegNet net(cfg.seg, seg_init_seed(cfg.seed));
  nn::restore(net.params(), nn::load_checkpoint(path));
  return net;
}

ScaleAgent load_agent(const RunConfig& cfg, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("missing agent checkpoint " + path.string());
  ScaleAgent agent(cfg.agent, agent_init_seed(cfg.seed));
  nn::restore(agent.params(), nn::load_checkpoint(path));
  return agent;
}

}  // namespace geoagent
