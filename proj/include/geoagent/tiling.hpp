#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace geoagent {

/// Multi-channel image stored planar (channel, row, col). Values are
/// expected in [0,1]; origin records the offset of this raster inside the
/// raster it was cut from.
struct Raster {
  int channels = 0;
  int height = 0;
  int width = 0;
  int origin_row = 0;
  int origin_col = 0;
  std::vector<double> data;

  Raster() = default;
  Raster(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  double& at(int c, int r, int col) {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
  double at(int c, int r, int col) const {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
};

/// Per-pixel class index in [0, classes).
struct LabelMask {
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<std::uint8_t> data;

  LabelMask() = default;
  LabelMask(int h, int w, int k, std::uint8_t fill = 0)
      : height(h), width(w), classes(k), data(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::size_t popcount() const;
};

struct PatchSpec {
  int row = 0;
  int col = 0;
  int h = 0;
  int w = 0;
  int scale = 1;

  bool operator==(const PatchSpec&) const = default;
};

struct TileGrid {
  int raster_height = 0;
  int raster_width = 0;
  std::vector<PatchSpec> patches;

  std::size_t T() const { return patches.size(); }
};

/// Placement of the (a*h)x(a*w) context window in source-raster pixels. The
/// window may extend past the raster only when it is larger than the raster.
struct ContextWindow {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

/// Row-major grid with stride h/w; the last row/column is anchored to the
/// raster edge so non-divisible rasters overlap instead of padding.
TileGrid build_grid(const Raster& raster, int h, int w);
TileGrid build_grid(int raster_height, int raster_width, int h, int w);

void check_patch(const PatchSpec& p, int raster_height, int raster_width);

Raster extract_local(const Raster& raster, const PatchSpec& p);
LabelMask extract_local(const LabelMask& mask, const PatchSpec& p);

/// Writes `patch` back into `raster` at p's coordinates.
void insert_local(Raster& raster, const Raster& patch, const PatchSpec& p);

ContextWindow context_window(const PatchSpec& p, int scale, int raster_height, int raster_width);

/// Context window around p, box-downsampled by `scale` to p.h x p.w.
Raster extract_context(const Raster& raster, const PatchSpec& p, int scale);

/// Context-window labels reduced to p.h x p.w by per-block majority vote
/// (ties to the lowest class index).
LabelMask extract_context_labels(const LabelMask& mask, const PatchSpec& p, int scale);

/// Integer-factor area average.
Raster box_downsample(const Raster& raster, int factor);

/// Exact area-weighted average onto an arbitrary smaller grid.
Raster make_thumbnail(const Raster& raster, int thumb_height, int thumb_width);

BinaryMask make_position_mask(const PatchSpec& p, std::pair<int, int> raster_hw,
                              std::pair<int, int> thumb_hw);

struct PatchPrediction {
  PatchSpec patch;
  Raster probs;  // channels = classes, p.h x p.w
};

/// Averages overlapping class probabilities, then argmax (lowest index on
/// ties). Throws CoverageError if any pixel is left uncovered.
LabelMask stitch(const std::vector<PatchPrediction>& predictions, int raster_height,
                 int raster_width);

/// Argmax over the channel axis, ties to the lowest class index.
LabelMask argmax_labels(const Raster& probs);

}  // namespace geoagent
