#include "geoagent/environment.hpp"

#include <string>

#include "geoagent/errors.hpp"
#include "geoagent/raster_io.hpp"

namespace geoagent {

std::vector<std::shared_ptr<const Scene>> load_scenes(const Manifest& manifest, int classes) {
  std::vector<std::shared_ptr<const Scene>> scenes;
  scenes.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    auto s = std::make_shared<Scene>();
    s->id = e.id;
    s->raster = read_raster(manifest.directory / e.raster);
    s->labels = read_labels(manifest.directory / e.label, classes);
    if (s->labels.height != s->raster.height || s->labels.width != s->raster.width) {
      throw DimensionError("scene " + e.id + ": labels do not match raster");
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

MappingEpisode::MappingEpisode(std::shared_ptr<const Scene> scene, const SegNet& net,
                               const EpisodeGeometry& geo, int actions, BranchMode mode)
    : scene_(std::move(scene)), net_(&net), geo_(geo), actions_count_(actions), mode_(mode) {
  const Raster& r = scene_->raster;
  if (scene_->labels.height != r.height || scene_->labels.width != r.width) {
    throw DimensionError("scene " + scene_->id + ": labels do not match raster");
  }
  grid_ = build_grid(r, geo.patch_h, geo.patch_w);
  thumbnail_ = std::make_shared<const Raster>(make_thumbnail(r, geo.thumb_h, geo.thumb_w));
  masks_.reserve(grid_.T());
  for (const PatchSpec& p : grid_.patches) {
    masks_.push_back(make_position_mask(p, {r.height, r.width}, {geo.thumb_h, geo.thumb_w}));
  }
  local_.resize(grid_.T());
  local_argmax_.resize(grid_.T());
}

State MappingEpisode::observe() const {
  if (done()) throw Error("episode for " + scene_->id + " is finished");
  return State{thumbnail_, masks_[t_]};
}

Raster predict_patch(const SegNet& net, const Raster& raster, const PatchSpec& patch, int action,
                     BranchMode mode) {
  PatchSpec p = patch;
  p.scale = action;
  const std::pair<int, int> hw{raster.height, raster.width};
  if (mode == BranchMode::SingleBranch) {
    return to_raster(net.predict_context_only(extract_context(raster, p, action), action, p, hw));
  }
  const Raster local = extract_local(raster, p);
  if (action == 1) return to_raster(net.forward(local, nullptr, 1, p, hw).final_probs);
  const Raster context = extract_context(raster, p, action);
  return to_raster(net.forward(local, &context, action, p, hw).final_probs);
}

Raster MappingEpisode::predict(std::size_t t, int action) const {
  return predict_patch(*net_, scene_->raster, grid_.patches[t], action, mode_);
}

const LabelMask& MappingEpisode::local_labels(std::size_t t) {
  if (local_[t].probs.data.empty()) {
    const PatchSpec& p = grid_.patches[t];
    local_[t] = PatchPrediction{p, predict_patch(*net_, scene_->raster, p, 1, BranchMode::Dual)};
    local_argmax_[t] = argmax_labels(local_[t].probs);
  }
  return local_argmax_[t];
}

double MappingEpisode::preview_reward(int action) {
  if (action < 1 || action > actions_count_) throw Error("action " + std::to_string(action) + " out of range");
  const LabelMask& local = local_labels(t_);
  auto it = preview_.find(action);
  if (it == preview_.end()) {
    Raster probs = (action == 1 && mode_ == BranchMode::Dual) ? local_[t_].probs : predict(t_, action);
    it = preview_.emplace(action, std::move(probs)).first;
  }
  const LabelMask truth = extract_local(scene_->labels, grid_.patches[t_]);
  return patch_reward(truth, argmax_labels(it->second), local);
}

StepResult MappingEpisode::step(int action) {
  if (done()) throw Error("episode for " + scene_->id + " is finished");
  if (action < 1 || action > actions_count_) throw Error("action " + std::to_string(action) + " out of range");
  const double r = preview_reward(action);
  PatchSpec p = grid_.patches[t_];
  p.scale = action;
  chosen_.push_back(PatchPrediction{p, std::move(preview_.at(action))});
  preview_.clear();
  actions_.push_back(action);

  StepResult res;
  res.patch_reward = r;
  RewardRecord rec{t_, action, r, std::nullopt};
  ++t_;
  if (done()) {
    res.map_bonus = map_reward(scene_->labels, final_map(), local_map(), grid_.T());
    rec.map_bonus = res.map_bonus;
    res.done = true;
  }
  res.reward = res.patch_reward + res.map_bonus.value_or(0.0);
  records_.push_back(rec);
  return res;
}

namespace {

nn::NamedTensor raster_entry(const std::string& name, const Raster& r) {
  return {name, {r.channels, r.height, r.width}, r.data};
}

const nn::NamedTensor& find_entry(const nn::Checkpoint& ckpt, const std::string& name) {
  for (const auto& e : ckpt) {
    if (e.name == name) return e;
  }
  throw IoError("episode state: missing entry " + name);
}

Raster entry_raster(const nn::NamedTensor& e) {
  if (e.dims.size() != 3) throw IoError("episode state: " + e.name + " is not a raster");
  Raster r(e.dims[0], e.dims[1], e.dims[2]);
  r.data = e.values;
  return r;
}

}  // namespace

void MappingEpisode::export_state(nn::Checkpoint& out, const std::string& prefix) const {
  const int n = static_cast<int>(t_);
  std::vector<double> acts(actions_.begin(), actions_.end());
  std::vector<double> rewards;
  for (const auto& r : records_) rewards.push_back(r.patch_reward);
  out.push_back({prefix + "actions", {n}, acts});
  out.push_back({prefix + "patch_rewards", {n}, rewards});
  for (std::size_t t = 0; t < t_; ++t) {
    out.push_back(raster_entry(prefix + "local/" + std::to_string(t), local_[t].probs));
    out.push_back(raster_entry(prefix + "chosen/" + std::to_string(t), chosen_[t].probs));
  }
}

void MappingEpisode::import_state(const nn::Checkpoint& in, const std::string& prefix) {
  const auto& acts = find_entry(in, prefix + "actions");
  const auto& rewards = find_entry(in, prefix + "patch_rewards");
  const std::size_t n = acts.values.size();
  if (rewards.values.size() != n || n > grid_.T()) throw IoError("episode state: bad step count");
  t_ = 0;
  actions_.clear();
  records_.clear();
  chosen_.clear();
  preview_.clear();
  for (std::size_t t = 0; t < n; ++t) {
    const int a = static_cast<int>(acts.values[t]);
    PatchSpec p = grid_.patches[t];
    local_[t] = PatchPrediction{p, entry_raster(find_entry(in, prefix + "local/" + std::to_string(t)))};
    local_argmax_[t] = argmax_labels(local_[t].probs);
    p.scale = a;
    chosen_.push_back(PatchPrediction{p, entry_raster(find_entry(in, prefix + "chosen/" + std::to_string(t)))});
    actions_.push_back(a);
    records_.push_back(RewardRecord{t, a, rewards.values[t], std::nullopt});
  }
  t_ = n;
  if (done()) {
    records_.back().map_bonus = map_reward(scene_->labels, final_map(), local_map(), grid_.T());
  }
}

double MappingEpisode::episode_reward() const {
  double total = 0.0;
  for (const auto& r : records_) total += r.total();
  return total;
}

LabelMask MappingEpisode::final_map() const {
  if (!done()) throw Error("episode for " + scene_->id + " is not finished");
  LabelMask m = stitch(chosen_, scene_->raster.height, scene_->raster.width);
  m.classes = scene_->labels.classes;
  return m;
}

LabelMask MappingEpisode::local_map() const {
  if (!done()) throw Error("episode for " + scene_->id + " is not finished");
  LabelMask m = stitch(local_, scene_->raster.height, scene_->raster.width);
  m.classes = scene_->labels.classes;
  return m;
}

StepResult BanditEnvironment::step(int action) {
  if (done()) throw Error("bandit episode is finished");
  StepResult res;
  res.patch_reward = action == rewarded_ ? 1.0 : 0.0;
  res.reward = res.patch_reward;
  ++t_;
  res.done = done();
  return res;
}

}  // namespace geoagent
