#include "geoagent/synthgeo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geoagent/errors.hpp"
#include "geoagent/nn/rng.hpp"
#include "geoagent/raster_io.hpp"

namespace geoagent {

namespace {

constexpr int kWaterMargin = 6;

bool overlaps(const Blob& a, const Blob& b, int margin) {
  return a.top < b.top + b.height + margin && b.top < a.top + a.height + margin &&
         a.left < b.left + b.width + margin && b.left < a.left + a.width + margin;
}

bool is_water(LandClass c) { return c == LandClass::SmallWater || c == LandClass::LargeWater; }

bool covers(const Blob& b, int r, int c) {
  if (r < b.top || r >= b.top + b.height || c < b.left || c >= b.left + b.width) return false;
  if (b.shape == Blob::Shape::Rectangle) return true;
  const double ry = b.height / 2.0, rx = b.width / 2.0;
  const double dy = (r + 0.5 - b.top - ry) / ry;
  const double dx = (c + 0.5 - b.left - rx) / rx;
  return dx * dx + dy * dy <= 1.0;
}

}  // namespace

std::array<double, 3> texture_base(LandClass cls) {
  switch (cls) {
    case LandClass::Background: return {0.45, 0.55, 0.30};
    case LandClass::SmallWater:
    case LandClass::LargeWater: return {0.15, 0.30, 0.60};
    case LandClass::Built: return {0.75, 0.65, 0.60};
  }
  return {0, 0, 0};
}

double texture_contrast() {
  const std::array<LandClass, 3> fams = {LandClass::Background, LandClass::SmallWater, LandClass::Built};
  double best = 1e9;
  for (std::size_t i = 0; i < fams.size(); ++i) {
    for (std::size_t j = i + 1; j < fams.size(); ++j) {
      const auto a = texture_base(fams[i]), b = texture_base(fams[j]);
      double d = 0.0;
      for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(a[k] - b[k]));
      best = std::min(best, d);
    }
  }
  return best;
}

void SceneConfig::validate() const {
  if (patch_hint < 8) throw ConfigError("scene: patch_hint must be >= 8");
  if (height < 4 * patch_hint || width < 4 * patch_hint) {
    throw ConfigError("scene: height and width must be at least 4 * patch_hint");
  }
  for (const auto* r : {&ponds, &large_water, &built}) {
    if (r->min < 0 || r->max < r->min) throw ConfigError("scene: bad blob count range");
  }
  if (noise < 0.0 || noise >= 1.0) throw ConfigError("scene: noise must be in [0,1)");
  if (noise >= texture_contrast()) throw ConfigError("scene: noise must stay below texture contrast");
  if (max_retries < 1) throw ConfigError("scene: max_retries must be >= 1");
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, int index) {
  return nn::stream_seed(dataset_seed, "scene/" + std::to_string(index));
}

GeneratedScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  nn::Rng rng = nn::make_stream(cfg.seed, "synthgeo");
  const int H = cfg.height, W = cfg.width, hint = cfg.patch_hint;
  std::vector<Blob> blobs;

  auto place = [&](LandClass label, auto&& shape_fn, auto&& conflicts) {
    for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
      Blob b = shape_fn();
      b.label = label;
      b.top = nn::uniform_int(rng, 0, H - b.height);
      b.left = nn::uniform_int(rng, 0, W - b.width);
      if (!conflicts(b)) {
        blobs.push_back(b);
        return;
      }
    }
    throw GenerationError("could not place blob after " + std::to_string(cfg.max_retries) +
                          " attempts (seed " + std::to_string(cfg.seed) + ")");
  };
  auto water_conflict = [&](const Blob& b) {
    return std::any_of(blobs.begin(), blobs.end(),
                       [&](const Blob& o) { return is_water(o.label) && overlaps(b, o, kWaterMargin); });
  };
  auto built_conflict = [&](const Blob& b) {
    return std::any_of(blobs.begin(), blobs.end(),
                       [&](const Blob& o) { return is_water(o.label) && overlaps(b, o, 2); });
  };

  const int n_large = nn::uniform_int(rng, cfg.large_water.min, cfg.large_water.max);
  const int n_ponds = nn::uniform_int(rng, cfg.ponds.min, cfg.ponds.max);
  const int n_built = nn::uniform_int(rng, cfg.built.min, cfg.built.max);

  // Large water first: lakes (ellipses) and rivers (long rectangles), every
  // one with at least one side longer than patch_hint.
  for (int i = 0; i < n_large; ++i) {
    place(LandClass::LargeWater, [&] {
      Blob b;
      if (nn::uniform01(rng) < 0.5) {
        b.shape = Blob::Shape::Ellipse;
        b.height = nn::uniform_int(rng, std::min(H, hint * 3 / 2), std::min(H, hint * 3));
        b.width = nn::uniform_int(rng, std::min(W, hint * 3 / 2), std::min(W, hint * 3));
      } else {
        b.shape = Blob::Shape::Rectangle;
        const int thick = nn::uniform_int(rng, hint * 3 / 8, hint * 5 / 8);
        const int length = nn::uniform_int(rng, std::min(std::min(H, W), hint * 3), std::min(std::min(H, W), hint * 6));
        if (nn::uniform01(rng) < 0.5) {
          b.height = thick;
          b.width = length;
        } else {
          b.height = length;
          b.width = thick;
        }
      }
      return b;
    }, water_conflict);
  }
  for (int i = 0; i < n_ponds; ++i) {
    place(LandClass::SmallWater, [&] {
      Blob b;
      b.shape = nn::uniform01(rng) < 0.7 ? Blob::Shape::Ellipse : Blob::Shape::Rectangle;
      b.height = nn::uniform_int(rng, hint / 5, hint * 7 / 8);
      b.width = nn::uniform_int(rng, hint / 5, hint * 7 / 8);
      return b;
    }, water_conflict);
  }
  for (int i = 0; i < n_built; ++i) {
    place(LandClass::Built, [&] {
      Blob b;
      b.shape = Blob::Shape::Rectangle;
      b.height = nn::uniform_int(rng, hint * 3 / 8, hint * 5 / 4);
      b.width = nn::uniform_int(rng, hint * 3 / 8, hint * 5 / 4);
      return b;
    }, built_conflict);
  }

  GeneratedScene scene;
  scene.labels = LabelMask(H, W, kSceneClasses, static_cast<std::uint8_t>(LandClass::Background));
  // Built first so water (which never overlaps built) is unaffected by order.
  for (LandClass pass : {LandClass::Built, LandClass::SmallWater, LandClass::LargeWater}) {
    for (const Blob& b : blobs) {
      if (b.label != pass) continue;
      for (int r = b.top; r < b.top + b.height; ++r) {
        for (int c = b.left; c < b.left + b.width; ++c) {
          if (covers(b, r, c)) scene.labels.at(r, c) = static_cast<std::uint8_t>(b.label);
        }
      }
    }
  }
  nn::Rng tex = nn::make_stream(cfg.seed, "synthgeo/texture");
  scene.raster = Raster(3, H, W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const auto base = texture_base(static_cast<LandClass>(scene.labels.at(r, c)));
      for (int ch = 0; ch < 3; ++ch) {
        scene.raster.at(ch, r, c) = std::clamp(base[ch] + nn::uniform(tex, -cfg.noise, cfg.noise), 0.0, 1.0);
      }
    }
  }
  scene.blobs = std::move(blobs);
  return scene;
}

LabelMask relabel_water_by_extent(const LabelMask& labels, int patch_hint) {
  const int H = labels.height, W = labels.width;
  LabelMask out = labels;
  std::vector<int> comp(static_cast<std::size_t>(H) * W, -1);
  std::vector<int> stack;
  std::vector<int> members;
  int next = 0;
  for (int start = 0; start < H * W; ++start) {
    if (comp[start] >= 0 || !is_water(static_cast<LandClass>(labels.data[start]))) continue;
    members.clear();
    stack.assign(1, start);
    comp[start] = next;
    int r0 = H, r1 = -1, c0 = W, c1 = -1;
    while (!stack.empty()) {
      const int idx = stack.back();
      stack.pop_back();
      members.push_back(idx);
      const int r = idx / W, c = idx % W;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int nr = r + dr, nc = c + dc;
          if (nr < 0 || nr >= H || nc < 0 || nc >= W) continue;
          const int n = nr * W + nc;
          if (comp[n] < 0 && is_water(static_cast<LandClass>(labels.data[n]))) {
            comp[n] = next;
            stack.push_back(n);
          }
        }
      }
    }
    const bool small = (r1 - r0 + 1) <= patch_hint && (c1 - c0 + 1) <= patch_hint;
    for (int idx : members) {
      out.data[idx] = static_cast<std::uint8_t>(small ? LandClass::SmallWater : LandClass::LargeWater);
    }
    ++next;
  }
  return out;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ostringstream os;
  os << kManifestHeader << "\n";
  for (const auto& e : manifest.entries) {
    os << e.id << "\t" << e.raster.generic_string() << "\t" << e.label.generic_string() << "\t" << e.seed << "\n";
  }
  const std::string text = os.str();
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.directory = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw IoError(path.string() + ": missing manifest header");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string raster, label, seed;
    if (!std::getline(ls, e.id, '\t') || !std::getline(ls, raster, '\t') ||
        !std::getline(ls, label, '\t') || !std::getline(ls, seed)) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
    }
    e.raster = raster;
    e.label = label;
    try {
      e.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad seed '" + seed + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

Manifest generate_dataset(const SceneConfig& cfg, int n_scenes, const std::filesystem::path& out_dir) {
  if (n_scenes < 0) throw ConfigError("scene count must be >= 0");
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  Manifest m;
  m.directory = out_dir;
  for (int i = 0; i < n_scenes; ++i) {
    SceneConfig sc = cfg;
    sc.seed = scene_seed(cfg.seed, i);
    const GeneratedScene scene = generate_scene(sc);
    char id[32];
    std::snprintf(id, sizeof id, "scene_%04d", i);
    ManifestEntry e{id, std::string(id) + ".raster.gatn", std::string(id) + ".labels.gatn", sc.seed};
    write_raster(out_dir / e.raster, scene.raster);
    write_labels(out_dir / e.label, scene.labels);
    m.entries.push_back(std::move(e));
  }
  write_manifest(m, out_dir / "manifest.tsv");
  return m;
}

}  // namespace geoagent
