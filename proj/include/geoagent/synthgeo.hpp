#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geoagent/tiling.hpp"

namespace geoagent {

enum class LandClass : std::uint8_t { Background = 0, SmallWater = 1, LargeWater = 2, Built = 3 };
inline constexpr int kSceneClasses = 4;

struct CountRange {
  int min = 0;
  int max = 0;
};

/// Procedural scene parameters. Water blobs of both classes share one
/// texture; only their extent relative to patch_hint tells them apart.
struct SceneConfig {
  int height = 512;
  int width = 512;
  int patch_hint = 64;
  CountRange ponds{4, 8};
  CountRange large_water{2, 3};
  CountRange built{3, 6};
  double noise = 0.08;  // half-width of the i.i.d. uniform texture noise
  std::uint64_t seed = 1;
  int max_retries = 500;

  void validate() const;
};

struct Blob {
  enum class Shape { Ellipse, Rectangle };
  Shape shape = Shape::Ellipse;
  int top = 0, left = 0, height = 0, width = 0;  // declared bounding box
  LandClass label = LandClass::Background;
};

struct GeneratedScene {
  Raster raster;
  LabelMask labels;
  std::vector<Blob> blobs;
};

/// Base color of each texture family (background, water, built).
std::array<double, 3> texture_base(LandClass cls);

/// Smallest distance between two texture families' base colors.
double texture_contrast();

/// Throws GenerationError when blobs cannot be placed without overlap
/// within cfg.max_retries attempts each.
GeneratedScene generate_scene(const SceneConfig& cfg);

/// Relabels water by connected component: small-water iff the component's
/// pixel bounding box fits in patch_hint x patch_hint. Used as the
/// generator's self-check.
LabelMask relabel_water_by_extent(const LabelMask& labels, int patch_hint);

struct ManifestEntry {
  std::string id;
  std::filesystem::path raster;  // relative to the manifest directory
  std::filesystem::path label;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::filesystem::path directory;
  std::vector<ManifestEntry> entries;
};

inline constexpr const char* kManifestHeader = "id\traster\tlabel\tseed";

/// Writes n scenes (GATN raster + labels) and manifest.tsv into out_dir.
Manifest generate_dataset(const SceneConfig& cfg, int n_scenes, const std::filesystem::path& out_dir);

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Seed of scene i in a dataset generated from cfg.seed.
std::uint64_t scene_seed(std::uint64_t dataset_seed, int index);

}  // namespace geoagent
