#include "geoagent/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "geoagent/errors.hpp"
#include "geoagent/nn/rng.hpp"

namespace geoagent::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_rank3(const Tensor& x, const char* op) {
  require(x.rank() == 3, std::string(op) + ": expected [C,H,W], got " + x.shape_string());
}

// Column matrix [(in*k*k), (oh*ow)] for a convolution.
RowMatrix im2col(const Tensor& x, const Conv2d& conv, int oh, int ow) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2), k = conv.kernel;
  RowMatrix col(static_cast<Eigen::Index>(C) * k * k, static_cast<Eigen::Index>(oh) * ow);
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = std::clamp(oy * conv.stride - conv.pad + ky, 0, H - 1);
          const double* src = &x.values()[(static_cast<std::size_t>(c) * H + iy) * W];
          for (int ox = 0; ox < ow; ++ox) {
            row[oy * ow + ox] = src[std::clamp(ox * conv.stride - conv.pad + kx, 0, W - 1)];
          }
        }
      }
    }
  }
  return col;
}

void col2im(const RowMatrix& col, const Conv2d& conv, int oh, int ow, Tensor& dx) {
  const int C = dx.dim(0), H = dx.dim(1), W = dx.dim(2), k = conv.kernel;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = std::clamp(oy * conv.stride - conv.pad + ky, 0, H - 1);
          double* dst = &dx.values()[(static_cast<std::size_t>(c) * H + iy) * W];
          for (int ox = 0; ox < ow; ++ox) {
            dst[std::clamp(ox * conv.stride - conv.pad + kx, 0, W - 1)] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

struct Tap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, i1 == i0 ? 0.0 : src - i0};
  }
  return taps;
}

}  // namespace

void he_uniform(Parameter& p, int fan_in, std::uint64_t seed, double gain) {
  Rng rng = make_stream(seed, p.name);
  const double bound = gain * std::sqrt(6.0 / std::max(fan_in, 1));
  for (double& v : p.value.values()) v = uniform(rng, -bound, bound);
}

Conv2d Conv2d::create(ParameterStore& store, const std::string& name, int in, int out, int kernel,
                      int stride, int pad, std::uint64_t seed, double gain) {
  Conv2d c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  c.pad = pad;
  c.weight = &store.add(name + ".weight", {out, in, kernel, kernel});
  c.bias = &store.add(name + ".bias", {out});
  he_uniform(*c.weight, in * kernel * kernel, seed, gain);
  return c;
}

Tensor Conv2d::forward(const Tensor& x) const {
  require_rank3(x, "conv2d");
  require(x.dim(0) == in_channels, "conv2d: expected " + std::to_string(in_channels) +
                                       " input channels, got " + x.shape_string());
  const int oh = out_extent(x.dim(1)), ow = out_extent(x.dim(2));
  require(oh > 0 && ow > 0, "conv2d: input " + x.shape_string() + " smaller than kernel");
  const RowMatrix col = im2col(x, *this, oh, ow);
  Tensor y({out_channels, oh, ow});
  ConstMatMap w(weight->value.data(), out_channels, static_cast<Eigen::Index>(in_channels) * kernel * kernel);
  MatMap ym(y.data(), out_channels, static_cast<Eigen::Index>(oh) * ow);
  ym.noalias() = w * col;
  for (int o = 0; o < out_channels; ++o) ym.row(o).array() += bias->value[o];
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, bool need_dx) const {
  const int oh = dy.dim(1), ow = dy.dim(2);
  require(dy.dim(0) == out_channels && oh == out_extent(x.dim(1)) && ow == out_extent(x.dim(2)),
          "conv2d backward: gradient shape " + dy.shape_string() + " mismatched");
  const Eigen::Index kdim = static_cast<Eigen::Index>(in_channels) * kernel * kernel;
  const RowMatrix col = im2col(x, *this, oh, ow);
  ConstMatMap dym(dy.data(), out_channels, static_cast<Eigen::Index>(oh) * ow);
  MatMap dw(weight->value.grad().data(), out_channels, kdim);
  dw.noalias() += dym * col.transpose();
  auto& db = bias->value.grad();
  for (int o = 0; o < out_channels; ++o) db[o] += dym.row(o).sum();
  if (!need_dx) return {};
  ConstMatMap w(weight->value.data(), out_channels, kdim);
  const RowMatrix dcol = w.transpose() * dym;
  Tensor dx(x.dims());
  col2im(dcol, *this, oh, ow, dx);
  return dx;
}

Dense Dense::create(ParameterStore& store, const std::string& name, int in, int out,
                    std::uint64_t seed, double gain) {
  Dense d;
  d.in_features = in;
  d.out_features = out;
  d.weight = &store.add(name + ".weight", {out, in});
  d.bias = &store.add(name + ".bias", {out});
  he_uniform(*d.weight, in, seed, gain);
  return d;
}

Tensor Dense::forward(const Tensor& x) const {
  require(static_cast<int>(x.size()) == in_features,
          "dense: expected " + std::to_string(in_features) + " inputs, got " + x.shape_string());
  Tensor y({out_features});
  for (int o = 0; o < out_features; ++o) {
    const double* w = &weight->value.values()[static_cast<std::size_t>(o) * in_features];
    double s = bias->value[o];
    for (int i = 0; i < in_features; ++i) s += w[i] * x[i];
    y[o] = s;
  }
  return y;
}

Tensor Dense::backward(const Tensor& x, const Tensor& dy, bool need_dx) const {
  require(static_cast<int>(dy.size()) == out_features, "dense backward: gradient shape mismatched");
  auto& dw = weight->value.grad();
  auto& db = bias->value.grad();
  Tensor dx({in_features});
  for (int o = 0; o < out_features; ++o) {
    const double g = dy[o];
    db[o] += g;
    double* dwr = &dw[static_cast<std::size_t>(o) * in_features];
    const double* w = &weight->value.values()[static_cast<std::size_t>(o) * in_features];
    for (int i = 0; i < in_features; ++i) {
      dwr[i] += g * x[i];
      if (need_dx) dx[i] += g * w[i];
    }
  }
  return need_dx ? dx : Tensor{};
}

Tensor relu(const Tensor& x) {
  Tensor y(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  require(y.same_shape(dy), "relu backward: shape mismatch");
  Tensor dx(y.dims());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > 0.0 ? dy[i] : 0.0;
  return dx;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  require_rank3(x, "resize_bilinear");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(H > 0 && W > 0 && out_h > 0 && out_w > 0, "resize_bilinear: empty extent");
  const auto ty = bilinear_taps(H, out_h);
  const auto tx = bilinear_taps(W, out_w);
  Tensor y({C, out_h, out_w});
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[ox];
        const double top = (1 - b.w1) * x.at(c, a.i0, b.i0) + b.w1 * x.at(c, a.i0, b.i1);
        const double bot = (1 - b.w1) * x.at(c, a.i1, b.i0) + b.w1 * x.at(c, a.i1, b.i1);
        y.at(c, oy, ox) = (1 - a.w1) * top + a.w1 * bot;
      }
    }
  }
  return y;
}

Tensor resize_bilinear_backward(const Tensor& dy, int in_h, int in_w) {
  require_rank3(dy, "resize_bilinear backward");
  const int C = dy.dim(0), oh = dy.dim(1), ow = dy.dim(2);
  const auto ty = bilinear_taps(in_h, oh);
  const auto tx = bilinear_taps(in_w, ow);
  Tensor dx({C, in_h, in_w});
  for (int c = 0; c < C; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      const Tap& a = ty[oy];
      for (int ox = 0; ox < ow; ++ox) {
        const Tap& b = tx[ox];
        const double g = dy.at(c, oy, ox);
        dx.at(c, a.i0, b.i0) += (1 - a.w1) * (1 - b.w1) * g;
        dx.at(c, a.i0, b.i1) += (1 - a.w1) * b.w1 * g;
        dx.at(c, a.i1, b.i0) += a.w1 * (1 - b.w1) * g;
        dx.at(c, a.i1, b.i1) += a.w1 * b.w1 * g;
      }
    }
  }
  return dx;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  require_rank3(x, "upsample_nearest");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor y({C, H * factor, W * factor});
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H * factor; ++r) {
      for (int col = 0; col < W * factor; ++col) y.at(c, r, col) = x.at(c, r / factor, col / factor);
    }
  }
  return y;
}

Tensor upsample_nearest_backward(const Tensor& dy, int factor) {
  require_rank3(dy, "upsample_nearest backward");
  const int C = dy.dim(0), H = dy.dim(1) / factor, W = dy.dim(2) / factor;
  Tensor dx({C, H, W});
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r < H * factor; ++r) {
      for (int col = 0; col < W * factor; ++col) dx.at(c, r / factor, col / factor) += dy.at(c, r, col);
    }
  }
  return dx;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank3(x, "global_avg_pool");
  const int C = x.dim(0);
  const std::size_t n = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  Tensor y({C});
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x.values()[c * n + i];
    y[c] = s / static_cast<double>(n);
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& dy, int h, int w) {
  const int C = static_cast<int>(dy.size());
  const std::size_t n = static_cast<std::size_t>(h) * w;
  Tensor dx({C, h, w});
  for (int c = 0; c < C; ++c) {
    const double g = dy[c] / static_cast<double>(n);
    std::fill_n(dx.data() + c * n, n, g);
  }
  return dx;
}

Tensor apply_mask(const Tensor& x, std::span<const std::uint8_t> mask) {
  require_rank3(x, "apply_mask");
  const std::size_t n = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  require(mask.size() == n, "apply_mask: mask size mismatch");
  Tensor y(x.dims());
  for (int c = 0; c < x.dim(0); ++c) {
    for (std::size_t i = 0; i < n; ++i) y.values()[c * n + i] = mask[i] ? x.values()[c * n + i] : 0.0;
  }
  return y;
}

Tensor masked_avg_pool(const Tensor& x, std::span<const std::uint8_t> mask) {
  require_rank3(x, "masked_avg_pool");
  const std::size_t n = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  require(mask.size() == n, "masked_avg_pool: mask size mismatch");
  const auto count = std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; });
  if (count == 0) throw GeometryError("masked_avg_pool: empty mask");
  Tensor y({x.dim(0)});
  for (int c = 0; c < x.dim(0); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) s += x.values()[c * n + i];
    }
    y[c] = s / static_cast<double>(count);
  }
  return y;
}

Tensor masked_avg_pool_backward(const Tensor& dy, std::span<const std::uint8_t> mask, int h, int w) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  const auto count = std::count_if(mask.begin(), mask.end(), [](auto v) { return v != 0; });
  if (count == 0) throw GeometryError("masked_avg_pool backward: empty mask");
  const int C = static_cast<int>(dy.size());
  Tensor dx({C, h, w});
  for (int c = 0; c < C; ++c) {
    const double g = dy[c] / static_cast<double>(count);
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) dx.values()[c * n + i] = g;
    }
  }
  return dx;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() >= 1 && logits.dim(0) > 0, "softmax: empty class dimension");
  const int K = logits.dim(0);
  const std::size_t n = logits.size() / K;
  Tensor p(logits.dims());
  for (std::size_t i = 0; i < n; ++i) {
    double m = logits[i];
    for (int k = 1; k < K; ++k) m = std::max(m, logits[k * n + i]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) {
      const double e = std::exp(logits[k * n + i] - m);
      p[k * n + i] = e;
      z += e;
    }
    for (int k = 0; k < K; ++k) p[k * n + i] /= z;
  }
  return p;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels,
                                   double weight) {
  const int K = logits.dim(0);
  const std::size_t n = logits.size() / K;
  require(labels.size() == n, "cross-entropy: " + std::to_string(labels.size()) +
                                  " labels for " + std::to_string(n) + " positions");
  CrossEntropy ce;
  ce.dlogits = Tensor(logits.dims());
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    require(y < K, "cross-entropy: label outside class range");
    double m = logits[i];
    for (int k = 1; k < K; ++k) m = std::max(m, logits[k * n + i]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(logits[k * n + i] - m);
    const double log_z = m + std::log(z);
    total += log_z - logits[static_cast<std::size_t>(y) * n + i];
    for (int k = 0; k < K; ++k) {
      const double p = std::exp(logits[k * n + i] - log_z);
      ce.dlogits[k * n + i] = weight * inv_n * (p - (k == y ? 1.0 : 0.0));
    }
  }
  ce.loss = total * inv_n;
  return ce;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank3(a, "concat_channels");
  require_rank3(b, "concat_channels");
  require(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
          "concat_channels: spatial mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.values().begin(), a.values().end(), y.values().begin());
  std::copy(b.values().begin(), b.values().end(), y.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int first_channels) {
  require_rank3(x, "split_channels");
  require(first_channels >= 0 && first_channels <= x.dim(0), "split_channels: bad split");
  Tensor a({first_channels, x.dim(1), x.dim(2)});
  Tensor b({x.dim(0) - first_channels, x.dim(1), x.dim(2)});
  std::copy(x.values().begin(), x.values().begin() + static_cast<std::ptrdiff_t>(a.size()), a.values().begin());
  std::copy(x.values().begin() + static_cast<std::ptrdiff_t>(a.size()), x.values().end(), b.values().begin());
  return {std::move(a), std::move(b)};
}

Tensor crop(const Tensor& x, int r0, int r1, int c0, int c1) {
  require_rank3(x, "crop");
  if (r0 < 0 || c0 < 0 || r1 > x.dim(1) || c1 > x.dim(2) || r1 <= r0 || c1 <= c0) {
    throw GeometryError("crop: rows [" + std::to_string(r0) + "," + std::to_string(r1) + ") cols [" +
                        std::to_string(c0) + "," + std::to_string(c1) + ") outside " + x.shape_string());
  }
  Tensor y({x.dim(0), r1 - r0, c1 - c0});
  for (int c = 0; c < x.dim(0); ++c) {
    for (int r = r0; r < r1; ++r) {
      for (int col = c0; col < c1; ++col) y.at(c, r - r0, col - c0) = x.at(c, r, col);
    }
  }
  return y;
}

Tensor crop_backward(const Tensor& dy, int full_h, int full_w, int r0, int c0) {
  Tensor dx({dy.dim(0), full_h, full_w});
  for (int c = 0; c < dy.dim(0); ++c) {
    for (int r = 0; r < dy.dim(1); ++r) {
      for (int col = 0; col < dy.dim(2); ++col) dx.at(c, r0 + r, c0 + col) = dy.at(c, r, col);
    }
  }
  return dx;
}

void add_inplace(Tensor& acc, const Tensor& x) {
  require(acc.same_shape(x), "add_inplace: shape mismatch " + acc.shape_string() + " vs " + x.shape_string());
  for (std::size_t i = 0; i < x.size(); ++i) acc[i] += x[i];
}

}  // namespace geoagent::nn
