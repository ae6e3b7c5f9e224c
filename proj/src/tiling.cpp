#include "geoagent/tiling.hpp"

#include <algorithm>
#include <string>

#include "geoagent/errors.hpp"

namespace geoagent {

namespace {

std::string rect_text(const PatchSpec& p) {
  return "(" + std::to_string(p.row) + "," + std::to_string(p.col) + "," + std::to_string(p.h) +
         "x" + std::to_string(p.w) + ")";
}

std::vector<int> edge_anchored_starts(int extent, int size) {
  std::vector<int> starts;
  for (int s = 0; s + size < extent; s += size) starts.push_back(s);
  starts.push_back(extent - size);
  return starts;
}

// Weights of source pixels contributing to each output pixel under exact
// area averaging from `src` cells onto `dst` cells.
struct AxisWeights {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
};

AxisWeights area_weights(int src, int dst) {
  AxisWeights aw;
  aw.first.resize(dst);
  aw.weights.resize(dst);
  // Source pixel j spans [j*dst, (j+1)*dst); output i spans [i*src, (i+1)*src).
  for (int i = 0; i < dst; ++i) {
    const long long lo = static_cast<long long>(i) * src;
    const long long hi = lo + src;
    const int j0 = static_cast<int>(lo / dst);
    const int j1 = static_cast<int>((hi + dst - 1) / dst);
    aw.first[i] = j0;
    for (int j = j0; j < j1; ++j) {
      const long long a = std::max(lo, static_cast<long long>(j) * dst);
      const long long b = std::min(hi, static_cast<long long>(j + 1) * dst);
      aw.weights[i].push_back(static_cast<double>(b - a) / static_cast<double>(src));
    }
  }
  return aw;
}

}  // namespace

std::size_t BinaryMask::popcount() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

TileGrid build_grid(int raster_height, int raster_width, int h, int w) {
  if (h <= 0 || w <= 0 || h > raster_height || w > raster_width) {
    throw DimensionError("patch " + std::to_string(h) + "x" + std::to_string(w) +
                         " does not fit raster " + std::to_string(raster_height) + "x" +
                         std::to_string(raster_width));
  }
  TileGrid grid;
  grid.raster_height = raster_height;
  grid.raster_width = raster_width;
  const auto rows = edge_anchored_starts(raster_height, h);
  const auto cols = edge_anchored_starts(raster_width, w);
  grid.patches.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) grid.patches.push_back(PatchSpec{r, c, h, w, 1});
  }
  return grid;
}

TileGrid build_grid(const Raster& raster, int h, int w) {
  return build_grid(raster.height, raster.width, h, w);
}

void check_patch(const PatchSpec& p, int raster_height, int raster_width) {
  if (p.h <= 0 || p.w <= 0 || p.row < 0 || p.col < 0 || p.row + p.h > raster_height ||
      p.col + p.w > raster_width || p.scale < 1) {
    throw DimensionError("patch " + rect_text(p) + " outside raster " +
                         std::to_string(raster_height) + "x" + std::to_string(raster_width));
  }
}

Raster extract_local(const Raster& raster, const PatchSpec& p) {
  check_patch(p, raster.height, raster.width);
  Raster out(raster.channels, p.h, p.w);
  out.origin_row = raster.origin_row + p.row;
  out.origin_col = raster.origin_col + p.col;
  for (int c = 0; c < raster.channels; ++c) {
    for (int r = 0; r < p.h; ++r) {
      const double* src = &raster.data[(static_cast<std::size_t>(c) * raster.height + p.row + r) *
                                           raster.width +
                                       p.col];
      std::copy(src, src + p.w, &out.at(c, r, 0));
    }
  }
  return out;
}

LabelMask extract_local(const LabelMask& mask, const PatchSpec& p) {
  check_patch(p, mask.height, mask.width);
  LabelMask out(p.h, p.w, mask.classes);
  for (int r = 0; r < p.h; ++r) {
    for (int c = 0; c < p.w; ++c) out.at(r, c) = mask.at(p.row + r, p.col + c);
  }
  return out;
}

void insert_local(Raster& raster, const Raster& patch, const PatchSpec& p) {
  check_patch(p, raster.height, raster.width);
  if (patch.channels != raster.channels || patch.height != p.h || patch.width != p.w) {
    throw DimensionError("insert_local: patch shape does not match spec " + rect_text(p));
  }
  for (int c = 0; c < raster.channels; ++c) {
    for (int r = 0; r < p.h; ++r) {
      for (int col = 0; col < p.w; ++col) raster.at(c, p.row + r, p.col + col) = patch.at(c, r, col);
    }
  }
}

ContextWindow context_window(const PatchSpec& p, int scale, int raster_height, int raster_width) {
  if (scale < 1) throw DimensionError("context scale must be >= 1");
  check_patch(p, raster_height, raster_width);
  auto place = [](int start, int size, int scale_, int extent) {
    const int window = size * scale_;
    const int ideal = start - ((scale_ - 1) * size) / 2;
    // Translate to fit; a window larger than the raster is centred as far as
    // the raster allows and replicated past its edges.
    const int lo = std::min(0, extent - window);
    const int hi = std::max(0, extent - window);
    return std::clamp(ideal, lo, hi);
  };
  ContextWindow cw;
  cw.height = p.h * scale;
  cw.width = p.w * scale;
  cw.top = place(p.row, p.h, scale, raster_height);
  cw.left = place(p.col, p.w, scale, raster_width);
  return cw;
}

Raster extract_context(const Raster& raster, const PatchSpec& p, int scale) {
  if (scale == 1) return extract_local(raster, p);
  const ContextWindow cw = context_window(p, scale, raster.height, raster.width);
  Raster out(raster.channels, p.h, p.w);
  out.origin_row = raster.origin_row + p.row;
  out.origin_col = raster.origin_col + p.col;
  const double inv = 1.0 / (static_cast<double>(scale) * scale);
  for (int c = 0; c < raster.channels; ++c) {
    for (int r = 0; r < p.h; ++r) {
      for (int col = 0; col < p.w; ++col) {
        double sum = 0.0;
        for (int dr = 0; dr < scale; ++dr) {
          const int sr = std::clamp(cw.top + r * scale + dr, 0, raster.height - 1);
          for (int dc = 0; dc < scale; ++dc) {
            const int sc = std::clamp(cw.left + col * scale + dc, 0, raster.width - 1);
            sum += raster.at(c, sr, sc);
          }
        }
        out.at(c, r, col) = sum * inv;
      }
    }
  }
  return out;
}

LabelMask extract_context_labels(const LabelMask& mask, const PatchSpec& p, int scale) {
  if (scale == 1) return extract_local(mask, p);
  const ContextWindow cw = context_window(p, scale, mask.height, mask.width);
  LabelMask out(p.h, p.w, mask.classes);
  std::vector<int> counts(static_cast<std::size_t>(std::max(mask.classes, 1)));
  for (int r = 0; r < p.h; ++r) {
    for (int col = 0; col < p.w; ++col) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int dr = 0; dr < scale; ++dr) {
        const int sr = std::clamp(cw.top + r * scale + dr, 0, mask.height - 1);
        for (int dc = 0; dc < scale; ++dc) {
          const int sc = std::clamp(cw.left + col * scale + dc, 0, mask.width - 1);
          ++counts[mask.at(sr, sc)];
        }
      }
      out.at(r, col) = static_cast<std::uint8_t>(
          std::distance(counts.begin(), std::max_element(counts.begin(), counts.end())));
    }
  }
  return out;
}

Raster box_downsample(const Raster& raster, int factor) {
  if (factor < 1 || raster.height % factor != 0 || raster.width % factor != 0) {
    throw DimensionError("box_downsample: factor " + std::to_string(factor) +
                         " does not divide " + std::to_string(raster.height) + "x" +
                         std::to_string(raster.width));
  }
  if (factor == 1) return raster;
  const int oh = raster.height / factor;
  const int ow = raster.width / factor;
  Raster out(raster.channels, oh, ow);
  out.origin_row = raster.origin_row;
  out.origin_col = raster.origin_col;
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int c = 0; c < raster.channels; ++c) {
    for (int r = 0; r < oh; ++r) {
      for (int col = 0; col < ow; ++col) {
        double sum = 0.0;
        for (int dr = 0; dr < factor; ++dr) {
          for (int dc = 0; dc < factor; ++dc) sum += raster.at(c, r * factor + dr, col * factor + dc);
        }
        out.at(c, r, col) = sum * inv;
      }
    }
  }
  return out;
}

Raster make_thumbnail(const Raster& raster, int thumb_height, int thumb_width) {
  if (thumb_height <= 0 || thumb_width <= 0 || thumb_height > raster.height ||
      thumb_width > raster.width) {
    throw DimensionError("thumbnail " + std::to_string(thumb_height) + "x" +
                         std::to_string(thumb_width) + " larger than raster");
  }
  if (raster.height % thumb_height == 0 && raster.width % thumb_width == 0 &&
      raster.height / thumb_height == raster.width / thumb_width) {
    return box_downsample(raster, raster.height / thumb_height);
  }
  const AxisWeights rw = area_weights(raster.height, thumb_height);
  const AxisWeights cw = area_weights(raster.width, thumb_width);
  Raster out(raster.channels, thumb_height, thumb_width);
  out.origin_row = raster.origin_row;
  out.origin_col = raster.origin_col;
  for (int c = 0; c < raster.channels; ++c) {
    for (int i = 0; i < thumb_height; ++i) {
      for (int j = 0; j < thumb_width; ++j) {
        double sum = 0.0;
        for (std::size_t a = 0; a < rw.weights[i].size(); ++a) {
          const int sr = rw.first[i] + static_cast<int>(a);
          double row_sum = 0.0;
          for (std::size_t b = 0; b < cw.weights[j].size(); ++b) {
            row_sum += cw.weights[j][b] * raster.at(c, sr, cw.first[j] + static_cast<int>(b));
          }
          sum += rw.weights[i][a] * row_sum;
        }
        out.at(c, i, j) = sum;
      }
    }
  }
  return out;
}

BinaryMask make_position_mask(const PatchSpec& p, std::pair<int, int> raster_hw,
                              std::pair<int, int> thumb_hw) {
  const auto [H, W] = raster_hw;
  const auto [th, tw] = thumb_hw;
  check_patch(p, H, W);
  BinaryMask mask(th, tw);
  // Thumbnail cell i spans source rows [i*H/th, (i+1)*H/th); compare in
  // integers scaled by th to stay exact.
  auto hits = [](int i, int extent, int cells, int start, int size) {
    const long long lo = static_cast<long long>(i) * extent;
    const long long hi = lo + extent;
    return lo < static_cast<long long>(start + size) * cells &&
           hi > static_cast<long long>(start) * cells;
  };
  for (int i = 0; i < th; ++i) {
    if (!hits(i, H, th, p.row, p.h)) continue;
    for (int j = 0; j < tw; ++j) {
      if (hits(j, W, tw, p.col, p.w)) mask.at(i, j) = 1;
    }
  }
  return mask;
}

LabelMask argmax_labels(const Raster& probs) {
  LabelMask out(probs.height, probs.width, probs.channels);
  for (int r = 0; r < probs.height; ++r) {
    for (int c = 0; c < probs.width; ++c) {
      int best = 0;
      double best_v = probs.at(0, r, c);
      for (int k = 1; k < probs.channels; ++k) {
        if (probs.at(k, r, c) > best_v) {
          best_v = probs.at(k, r, c);
          best = k;
        }
      }
      out.at(r, c) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

LabelMask stitch(const std::vector<PatchPrediction>& predictions, int raster_height,
                 int raster_width) {
  if (predictions.empty()) throw CoverageError("stitch: no predictions");
  const int K = predictions.front().probs.channels;
  Raster sum(K, raster_height, raster_width);
  std::vector<int> hits(static_cast<std::size_t>(raster_height) * raster_width, 0);
  for (const auto& pred : predictions) {
    const PatchSpec& p = pred.patch;
    check_patch(p, raster_height, raster_width);
    if (pred.probs.channels != K || pred.probs.height != p.h || pred.probs.width != p.w) {
      throw DimensionError("stitch: probability map shape does not match patch " + rect_text(p));
    }
    for (int r = 0; r < p.h; ++r) {
      for (int c = 0; c < p.w; ++c) {
        ++hits[static_cast<std::size_t>(p.row + r) * raster_width + p.col + c];
        for (int k = 0; k < K; ++k) sum.at(k, p.row + r, p.col + c) += pred.probs.at(k, r, c);
      }
    }
  }
  for (int r = 0; r < raster_height; ++r) {
    for (int c = 0; c < raster_width; ++c) {
      const int n = hits[static_cast<std::size_t>(r) * raster_width + c];
      if (n == 0) {
        throw CoverageError("stitch: pixel (" + std::to_string(r) + "," + std::to_string(c) +
                            ") not covered");
      }
      for (int k = 0; k < K; ++k) sum.at(k, r, c) /= n;
    }
  }
  return argmax_labels(sum);
}

}  // namespace geoagent
