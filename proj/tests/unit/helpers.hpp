#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "geoagent/nn/rng.hpp"
#include "geoagent/orchestrator.hpp"
#include "geoagent/tiling.hpp"

namespace testutil {

inline geoagent::LabelMask random_labels(geoagent::nn::Rng& rng, int h, int w, int k) {
  geoagent::LabelMask m(h, w, k);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(geoagent::nn::uniform_int(rng, 0, k - 1));
  return m;
}

inline geoagent::Raster random_raster(geoagent::nn::Rng& rng, int c, int h, int w) {
  geoagent::Raster r(c, h, w);
  for (double& v : r.data) v = geoagent::nn::uniform01(rng);
  return r;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("geoagent_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small end-to-end configuration that trains in seconds.
inline geoagent::RunConfig tiny_config(const std::filesystem::path& root) {
  geoagent::RunConfig c;
  c.seed = 7;
  c.data_dir = root / "data";
  c.out_dir = root / "run";
  c.train_scenes = 3;
  c.test_scenes = 2;
  c.scene.height = 64;
  c.scene.width = 64;
  c.scene.patch_hint = 16;
  c.scene.ponds = {1, 2};
  c.scene.large_water = {1, 1};
  c.scene.built = {1, 2};
  c.geometry = {16, 16, 16, 16};
  c.seg.widths = {4, 6};
  c.seg.fusion_channels = 6;
  c.agent.actions = 3;
  c.agent.widths = {4, 6};
  c.agent.hidden = 8;
  c.pretrain_steps = 6;
  c.pretrain_batch = 2;
  c.agent_steps = 20;
  c.agent_envs = 2;
  c.agent.n_steps = 3;
  c.joint_steps = 12;
  c.joint_interval = 4;
  return c;
}

}  // namespace testutil
