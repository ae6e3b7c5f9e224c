#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geoagent/metrics.hpp"
#include "geoagent/nn/checkpoint.hpp"
#include "geoagent/sca.hpp"
#include "geoagent/segnet.hpp"
#include "geoagent/synthgeo.hpp"

namespace geoagent {

struct Scene {
  std::string id;
  Raster raster;
  LabelMask labels;
};

/// Reads every scene listed in a manifest.
std::vector<std::shared_ptr<const Scene>> load_scenes(const Manifest& manifest, int classes);

struct EpisodeGeometry {
  int patch_h = 64;
  int patch_w = 64;
  int thumb_h = 64;
  int thumb_w = 64;
};

// How a chosen scale is turned into a patch prediction.
enum class BranchMode {
  Dual,          // local + context branches fused (context off at scale 1)
  SingleBranch,  // the scaled patch alone through one branch
};

/// Class probabilities [K, h, w] for patch p at scale `action`.
Raster predict_patch(const SegNet& net, const Raster& raster, const PatchSpec& p, int action, BranchMode mode);

/// One episode over a scene's tile grid. Each step segments the current
/// patch at the chosen scale and rewards the score gain over the cached
/// local-only prediction; the final step adds the whole-map bonus.
class MappingEpisode final : public ScaleEnvironment {
 public:
  MappingEpisode(std::shared_ptr<const Scene> scene, const SegNet& net, const EpisodeGeometry& geo,
                 int actions, BranchMode mode = BranchMode::Dual);

  std::size_t length() const override { return grid_.T(); }
  std::size_t position() const override { return t_; }
  State observe() const override;
  StepResult step(int action) override;

  /// Patch reward the current patch would receive at `action`; does not advance.
  double preview_reward(int action);

  const Scene& scene() const { return *scene_; }
  const TileGrid& grid() const { return grid_; }
  const std::shared_ptr<const Raster>& thumbnail() const { return thumbnail_; }
  const std::vector<int>& actions_taken() const { return actions_; }
  const std::vector<RewardRecord>& rewards() const { return records_; }
  double episode_reward() const;

  /// Stitched maps; available once the episode is done.
  LabelMask final_map() const;
  LabelMask local_map() const;

  /// Patch predictions at the chosen scales, in grid order.
  const std::vector<PatchPrediction>& predictions() const { return chosen_; }

  /// Progress so far (predictions, actions, rewards) as named tensors, so an
  /// unfinished episode can be resumed exactly even after the segmenter
  /// has changed.
  void export_state(nn::Checkpoint& out, const std::string& prefix) const;
  void import_state(const nn::Checkpoint& in, const std::string& prefix);

 private:
  const LabelMask& local_labels(std::size_t t);
  Raster predict(std::size_t t, int action) const;

  std::shared_ptr<const Scene> scene_;
  const SegNet* net_;
  EpisodeGeometry geo_;
  int actions_count_;
  BranchMode mode_;
  TileGrid grid_;
  std::shared_ptr<const Raster> thumbnail_;
  std::vector<BinaryMask> masks_;
  std::size_t t_ = 0;

  std::vector<PatchPrediction> local_;
  std::vector<LabelMask> local_argmax_;
  std::vector<PatchPrediction> chosen_;
  std::map<int, Raster> preview_;  // current patch only
  std::vector<int> actions_;
  std::vector<RewardRecord> records_;
};

/// Degenerate environment with injected rewards: every step observes the
/// same state and pays 1 for `rewarded_action`, 0 otherwise.
class BanditEnvironment final : public ScaleEnvironment {
 public:
  BanditEnvironment(State state, std::size_t length, int rewarded_action)
      : state_(std::move(state)), length_(length), rewarded_(rewarded_action) {}

  std::size_t length() const override { return length_; }
  std::size_t position() const override { return t_; }
  State observe() const override { return state_; }
  StepResult step(int action) override;
  void reset() { t_ = 0; }

 private:
  State state_;
  std::size_t length_;
  int rewarded_;
  std::size_t t_ = 0;
};

}  // namespace geoagent
