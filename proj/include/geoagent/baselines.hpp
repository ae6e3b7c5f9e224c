#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "geoagent/environment.hpp"

namespace geoagent {

/// A scale-selection strategy. Every policy runs over the same grids and
/// segmenter weights; only the action sequence (and for the single-branch
/// variants, how a scale is turned into a prediction) differs.
struct Policy {
  enum class Kind { LocalOnly, ContextOnly, FixedScale, RandomScale, SingleBranch, Learned, OracleScale };

  Kind kind = Kind::LocalOnly;
  int scale = 1;           // ContextOnly, FixedScale
  std::uint64_t seed = 0;  // RandomScale

  static Policy local_only() { return {Kind::LocalOnly, 1, 0}; }
  static Policy context_only(int a) { return {Kind::ContextOnly, a, 0}; }
  static Policy fixed_scale(int a) { return {Kind::FixedScale, a, 0}; }
  static Policy random_scale(std::uint64_t seed) { return {Kind::RandomScale, 1, seed}; }
  static Policy single_branch() { return {Kind::SingleBranch, 1, 0}; }
  static Policy learned() { return {Kind::Learned, 1, 0}; }
  static Policy oracle() { return {Kind::OracleScale, 1, 0}; }

  /// Parses "local-only", "context-only:3", "fixed:4", "random:<seed>",
  /// "single-branch", "learned" or "oracle".
  static Policy parse(const std::string& text);

  std::string name() const;
  BranchMode branch() const;
  bool needs_agent() const { return kind == Kind::SingleBranch || kind == Kind::Learned; }
};

struct PolicyContext {
  const SegNet* net = nullptr;
  const ScaleAgent* agent = nullptr;
  EpisodeGeometry geometry;
  int actions = 6;
};

/// Runs one complete episode of `policy` on `scene`. Agent policies act
/// greedily; RandomScale draws from `rng`.
MappingEpisode run_policy(const Policy& policy, std::shared_ptr<const Scene> scene,
                          const PolicyContext& ctx, nn::Rng& rng);

struct SceneResult {
  std::string id;
  double miou = 0.0;
  double mf1 = 0.0;
  double score = 0.0;
  double episode_reward = 0.0;
};

struct RunSummary {
  std::uint64_t seed = 0;
  std::vector<SceneResult> scenes;
  SceneResult mean;  // id is empty
};

struct PolicyReport {
  std::string policy;
  std::vector<RunSummary> runs;  // one, or one per seed for RandomScale
  SceneResult mean;              // mean over runs
  SceneResult sd;                // sample standard deviation over runs (zero for one run)
};

/// Evaluates `policy` over `scenes` in order. RandomScale runs `random_runs`
/// times with seeds derived from policy.seed.
PolicyReport evaluate_policy(const Policy& policy, std::span<const std::shared_ptr<const Scene>> scenes,
                             const PolicyContext& ctx, int random_runs = 5);

/// Tab-separated table: policy, runs, miou, mf1, score, reward with
/// standard deviations.
std::string format_report_table(std::span<const PolicyReport> reports);

/// One channel holding the chosen scale over each patch footprint; where
/// edge-anchored patches overlap the later patch wins.
Raster action_map(const TileGrid& grid, std::span<const int> actions);

/// Gray level for scale a of N: floor(255 * a / N).
int scale_intensity(int scale, int actions);

/// Writes an action map as a binary PGM using scale_intensity.
void write_action_map(const std::filesystem::path& path, const Raster& map, int actions);

Raster export_action_map(const Policy& policy, std::shared_ptr<const Scene> scene, const PolicyContext& ctx,
                         nn::Rng& rng);

}  // namespace geoagent
