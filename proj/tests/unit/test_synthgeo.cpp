#include <doctest.h>

#include <cmath>

#include "geoagent/errors.hpp"
#include "geoagent/raster_io.hpp"
#include "geoagent/synthgeo.hpp"
#include "helpers.hpp"

using namespace geoagent;

TEST_CASE("scenes are deterministic per seed") {
  SceneConfig cfg;
  cfg.height = cfg.width = 256;
  cfg.seed = 42;
  const GeneratedScene a = generate_scene(cfg), b = generate_scene(cfg);
  CHECK(a.raster.data == b.raster.data);
  CHECK(a.labels.data == b.labels.data);
  cfg.seed = 43;
  CHECK(generate_scene(cfg).labels.data != a.labels.data);
}

TEST_CASE("labels follow the extent rule and both water classes appear") {
  SceneConfig cfg;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    cfg.seed = seed;
    const GeneratedScene s = generate_scene(cfg);
    CHECK(relabel_water_by_extent(s.labels, cfg.patch_hint).data == s.labels.data);
    int counts[kSceneClasses] = {};
    for (auto v : s.labels.data) ++counts[v];
    CHECK(counts[static_cast<int>(LandClass::SmallWater)] > 0);
    CHECK(counts[static_cast<int>(LandClass::LargeWater)] > 0);
    CHECK(counts[static_cast<int>(LandClass::Built)] > 0);
  }
}

TEST_CASE("a blob inside the hint box is small water") {
  LabelMask m(128, 128, kSceneClasses);
  for (int r = 10; r < 42; ++r) {
    for (int c = 10; c < 42; ++c) m.at(r, c) = static_cast<std::uint8_t>(LandClass::LargeWater);
  }
  for (int r = 60; r < 70; ++r) {
    for (int c = 0; c < 100; ++c) m.at(r, c) = static_cast<std::uint8_t>(LandClass::SmallWater);
  }
  const LabelMask out = relabel_water_by_extent(m, 64);
  CHECK(out.at(20, 20) == static_cast<std::uint8_t>(LandClass::SmallWater));
  CHECK(out.at(65, 50) == static_cast<std::uint8_t>(LandClass::LargeWater));
}

TEST_CASE("pond and river pixels share one texture") {
  SceneConfig cfg;
  cfg.seed = 5;
  const GeneratedScene s = generate_scene(cfg);
  for (int ch = 0; ch < 3; ++ch) {
    double sum[2] = {0, 0};
    long n[2] = {0, 0};
    for (int r = 0; r < s.labels.height; ++r) {
      for (int c = 0; c < s.labels.width; ++c) {
        const auto cls = static_cast<LandClass>(s.labels.at(r, c));
        if (cls == LandClass::SmallWater || cls == LandClass::LargeWater) {
          const int i = cls == LandClass::SmallWater ? 0 : 1;
          sum[i] += s.raster.at(ch, r, c);
          ++n[i];
        }
      }
    }
    REQUIRE(n[0] > 100);
    REQUIRE(n[1] > 100);
    const double diff = std::abs(sum[0] / n[0] - sum[1] / n[1]);
    CHECK(diff < cfg.noise);
    // Mean of i.i.d. uniform noise: a generous 6-sigma band.
    const double sd = cfg.noise / std::sqrt(3.0);
    CHECK(diff < 6.0 * sd * std::sqrt(1.0 / n[0] + 1.0 / n[1]));
  }
  CHECK(cfg.noise < texture_contrast());
}

TEST_CASE("invalid or infeasible configurations are rejected") {
  SceneConfig cfg;
  cfg.height = 100;
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
  cfg = SceneConfig{};
  cfg.noise = 0.5;
  CHECK_THROWS_AS(generate_scene(cfg), ConfigError);
  cfg = SceneConfig{};
  cfg.ponds = {400, 400};
  cfg.max_retries = 20;
  CHECK_THROWS_AS(generate_scene(cfg), GenerationError);
}

TEST_CASE("datasets and manifests") {
  const auto dir = testutil::scratch_dir("dataset");
  SceneConfig cfg;
  cfg.height = cfg.width = 128;
  cfg.patch_hint = 32;

  const Manifest empty = generate_dataset(cfg, 0, dir / "empty");
  CHECK(empty.entries.empty());
  CHECK(read_manifest(dir / "empty" / "manifest.tsv").entries.empty());

  const Manifest m = generate_dataset(cfg, 3, dir / "a");
  generate_dataset(cfg, 3, dir / "b");
  REQUIRE(m.entries.size() == 3);
  const Manifest back = read_manifest(dir / "a" / "manifest.tsv");
  REQUIRE(back.entries.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.entries[i].id == m.entries[i].id);
    CHECK(back.entries[i].seed == m.entries[i].seed);
    const Raster r = read_raster(dir / "a" / back.entries[i].raster);
    CHECK(r.height == 128);
    CHECK(read_labels(dir / "a" / back.entries[i].label, kSceneClasses).width == 128);
    CHECK(read_file_bytes(dir / "a" / m.entries[i].raster) == read_file_bytes(dir / "b" / m.entries[i].raster));
  }
  CHECK(read_file_bytes(dir / "a" / "manifest.tsv") == read_file_bytes(dir / "b" / "manifest.tsv"));
  CHECK_THROWS_AS(read_manifest(dir / "missing.tsv"), IoError);
}
