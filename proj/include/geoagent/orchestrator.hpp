#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geoagent/baselines.hpp"
#include "geoagent/config.hpp"
#include "geoagent/environment.hpp"
#include "geoagent/nn/optimizer.hpp"
#include "geoagent/sca.hpp"
#include "geoagent/segnet.hpp"
#include "geoagent/synthgeo.hpp"

namespace geoagent {

struct RunConfig {
  std::uint64_t seed = 1;

  // Data. generate-data writes <data_dir>/train and <data_dir>/test.
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "run";
  int train_scenes = 20;
  int test_scenes = 10;
  SceneConfig scene;

  EpisodeGeometry geometry;
  SegNetConfig seg;
  AgentConfig agent;
  nn::OptimizerConfig seg_opt{0.02, 0.9, 1.0, 0, 0.0};
  nn::OptimizerConfig agent_opt{0.002, 0.9, 1.0, 0, 0.5};
  // Learning rates for joint training; unset means the phase-wide rate.
  std::optional<double> joint_seg_lr;
  std::optional<double> joint_agent_lr;

  std::int64_t pretrain_steps = 3000;
  int pretrain_batch = 4;
  std::int64_t agent_steps = 3000;  // transitions
  int agent_envs = 4;
  std::int64_t joint_steps = 2000;
  std::int64_t joint_interval = 100;
  std::int64_t checkpoint_every = 0;  // steps between saved run states (0 = only on stop)

  std::filesystem::path train_manifest() const { return data_dir / "train" / "manifest.tsv"; }
  std::filesystem::path test_manifest() const { return data_dir / "test" / "manifest.tsv"; }

  PolicyContext policy_context(const SegNet& net, const ScaleAgent* agent) const;

  void validate() const;
  static RunConfig from_kv(const KeyValueConfig& kv);
  static RunConfig load(const std::filesystem::path& path);
};

/// Writes the train and test splits; returns (train, test) manifests.
std::pair<Manifest, Manifest> generate_data(const RunConfig& cfg);

enum class Phase { Pretrain, Agent, Joint };
std::string phase_name(Phase phase);

/// Interrupt-and-resume controls for one phase invocation.
struct PhaseControl {
  std::optional<std::int64_t> stop_after;  // stop (and save state) once this many phase steps are done
  bool resume = false;                     // continue from <out>/<phase>_state
};

struct PhaseResult {
  std::int64_t steps = 0;
  bool finished = false;
};

/// Holds both networks, the seeded streams and the in-flight episodes of a
/// training phase. Steps: pretrain counts segmenter updates, agent training
/// counts transitions, joint training counts both in their own blocks.
class Trainer {
 public:
  Trainer(RunConfig cfg, std::vector<std::shared_ptr<const Scene>> train_scenes);
  Trainer(Trainer&&) = delete;  // in-flight episodes point at seg_

  SegNet& seg() { return seg_; }
  ScaleAgent& agent() { return agent_; }
  const RunConfig& config() const { return cfg_; }

  PhaseResult pretrain(const PhaseControl& ctl = {});
  PhaseResult train_agent(const PhaseControl& ctl = {});
  PhaseResult train_joint(const PhaseControl& ctl = {});

  /// Serializes everything the phase needs to continue bit-exactly.
  void save_state(const std::filesystem::path& dir) const;
  void load_state(const std::filesystem::path& dir);

 private:
  struct EnvSlot {
    std::size_t scene = 0;
    std::unique_ptr<MappingEpisode> episode;
  };

  double seg_update(const std::vector<std::pair<PatchSpec, std::size_t>>& batch);
  std::pair<PatchSpec, std::size_t> sample_pretrain_patch();
  std::pair<PatchSpec, std::size_t> sample_agent_patch();
  A2CLosses agent_update();
  std::size_t next_scene();
  const std::shared_ptr<const Raster>& thumbnail(std::size_t scene);
  void log_agent_row(std::ofstream& log, std::int64_t step, const A2CLosses& l) const;
  std::filesystem::path state_dir() const;
  nn::OptimizerConfig seg_opt() const;
  nn::OptimizerConfig agent_opt() const;
  PhaseResult run_phase(Phase phase, const PhaseControl& ctl);

  RunConfig cfg_;
  std::vector<std::shared_ptr<const Scene>> scenes_;
  std::vector<std::shared_ptr<const Raster>> thumbnails_;
  SegNet seg_;
  ScaleAgent agent_;

  Phase phase_ = Phase::Pretrain;
  std::int64_t step_ = 0;           // within the current phase
  std::int64_t seg_updates_ = 0;    // drives the segmenter lr schedule
  std::int64_t agent_updates_ = 0;  // drives the agent lr schedule
  nn::Rng data_rng_;
  nn::Rng action_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::vector<EnvSlot> envs_;
  std::deque<double> recent_rewards_;
  std::int64_t episodes_done_ = 0;
};

/// Greedy mapping of one raster with the learned policy.
struct MapResult {
  LabelMask labels;
  Raster action_map;
  std::vector<int> actions;
};
MapResult map_image(const RunConfig& cfg, const SegNet& net, const ScaleAgent& agent, const Raster& raster);

/// Loads both networks from checkpoints; missing files are configuration errors.
SegNet load_segnet(const RunConfig& cfg, const std::filesystem::path& path);
ScaleAgent load_agent(const RunConfig& cfg, const std::filesystem::path& path);

std::uint64_t seg_init_seed(std::uint64_t seed);
std::uint64_t agent_init_seed(std::uint64_t seed);

}  // namespace geoagent
