#pragma once

// Scalar reference implementations shared by the unit tests and the
// acceptance runner. Everything here is written from the definitions with
// plain loops and does not reuse the library kernels it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ciaosr/coords.hpp"
#include "ciaosr/model.hpp"
#include "ciaosr/nonlocal.hpp"

namespace oracle {

using namespace ciaosr;
using Vec = std::vector<double>;

// Bilinear interpolation of a scalar grid at continuous pixel position
// ((v + 1) * n - 1) / 2, with border samples replicated.
inline double bilinear(const std::vector<double>& g, int h, int w, Coord q) {
  const double py = ((q.y + 1) * h - 1) / 2, px = ((q.x + 1) * w - 1) / 2;
  const double y0 = std::floor(py), x0 = std::floor(px);
  const double fy = py - y0, fx = px - x0;
  auto at = [&](double r, double c) {
    const int ri = std::clamp(static_cast<int>(r), 0, h - 1), ci = std::clamp(static_cast<int>(c), 0, w - 1);
    return g[ri * w + ci];
  };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

inline Vec mlp_ref(const Mlp<double>& mlp, Vec x) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const auto& lin = mlp.layers[l];
    const std::size_t in = lin.in_features(), out = lin.out_features();
    if (x.size() != in) throw std::invalid_argument("mlp_ref: input width");
    Vec y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = lin.bias.raw()[o];
      for (std::size_t i = 0; i < in; ++i) acc += x[i] * lin.weight.raw()[i * out + o];
      y[o] = l + 1 < mlp.layers.size() ? std::max(acc, 0.0) : acc;
    }
    x = std::move(y);
  }
  return x;
}

inline double px(const Tensor<double>& t, std::size_t b, std::size_t c, int i, int j) {
  const int h = static_cast<int>(t.size(2)), w = static_cast<int>(t.size(3));
  i = std::clamp(i, 0, h - 1);
  j = std::clamp(j, 0, w - 1);
  return t.raw()[((b * t.size(1) + c) * h + i) * w + j];
}

// 3x3 edge-replicated neighbourhood stacked as c * 9 + dy * 3 + dx
inline Vec code(const Tensor<double>& feat, std::size_t b, GridIndex g) {
  Vec v;
  for (std::size_t c = 0; c < feat.size(1); ++c)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) v.push_back(px(feat, b, c, g.row + dy, g.col + dx));
  return v;
}

inline Vec cat(Vec a, const Vec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

struct RefOut {
  Vec rgb;
  Vec weights;
};

// One query evaluated with scalar loops. reverse flips the order in which
// the region is enumerated.
inline RefOut head_ref(const ImplicitHead<double>& head, const Tensor<double>& feat, const Tensor<double>& g, std::size_t b,
                Coord q, Scale s, bool reverse = false) {
  const int h = static_cast<int>(feat.size(2)), w = static_cast<int>(feat.size(3));
  const CoordGrid grid(h, w);
  const auto& cfg = head.config();
  std::vector<GridIndex> cells;
  std::array<double, 4> area{};
  if (cfg.variant == HeadVariant::kLiif) {
    const auto nb = local_neighbors(q, grid);
    cells.assign(nb.cells.begin(), nb.cells.end());
    area = area_weights(q, nb);
  } else {
    cells = local_region(q, grid, cfg.local_size);
  }
  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  if (reverse) std::reverse(order.begin(), order.end());

  auto aux = [&](GridIndex c) {
    const Coord k = grid.at(c);
    return Vec{(q.y - k.y) * h, (q.x - k.x) * w, s.h, s.w};
  };
  RefOut out;
  out.weights.assign(cells.size(), 0.0);
  if (cfg.variant == HeadVariant::kLiif) {
    Vec rgb(3, 0.0);
    for (std::size_t i : order) {
      const Vec f = mlp_ref(head.f_liif, cat(code(feat, b, cells[i]), aux(cells[i])));
      for (int c = 0; c < 3; ++c) rgb[c] += area[i] * f[c];
      out.weights[i] = area[i];
    }
    out.rgb = rgb;
    return out;
  }
  std::vector<double> logits(cells.size());
  std::vector<Vec> values(cells.size());
  const GridIndex near = nearest_index(q, grid);
  for (std::size_t i : order) {
    Vec gi;
    for (std::size_t c = 0; c < g.size(1); ++c) gi.push_back(px(g, b, c, cells[i].row, cells[i].col));
    values[i] = mlp_ref(head.phi_v, cat(cat(code(feat, b, cells[i]), gi), aux(cells[i])));
    if (cfg.variant == HeadVariant::kMlpWeights) {
      logits[i] = mlp_ref(head.phi_w, aux(cells[i]))[0];
    } else {
      const Vec key = mlp_ref(head.phi_k, cat(code(feat, b, cells[i]), aux(cells[i])));
      const Vec qv = code(feat, b, near);
      logits[i] = std::inner_product(qv.begin(), qv.end(), key.begin(), 0.0);
    }
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (std::size_t i : order) z += std::exp(logits[i] - m);
  Vec mixed(values[0].size(), 0.0);
  for (std::size_t i : order) {
    out.weights[i] = std::exp(logits[i] - m) / z;
    for (std::size_t k = 0; k < mixed.size(); ++k) mixed[k] += out.weights[i] * values[i][k];
  }
  out.rgb = mlp_ref(head.phi_q, mixed);
  return out;
}

// 1x1 conv applied to a C-vector
inline std::vector<double> project(const Conv2d<double>& conv, const std::vector<double>& x) {
  const std::size_t out = conv.weight.size(0), in = conv.weight.size(1);
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    y[o] = conv.bias.raw()[o];
    for (std::size_t i = 0; i < in; ++i) y[o] += conv.weight.raw()[o * in + i] * x[i];
  }
  return y;
}

// Per-pixel double loop over pixels and pooled tokens; returns N x C_g x H x W.
inline std::vector<double> nonlocal_ref(const NonLocalAttention<double>& nl, const Tensor<double>& f,
                                 const std::vector<int>& scales) {
  const std::size_t n = f.size(0), c = f.size(1), h = f.size(2), w = f.size(3);
  const std::size_t cg = nl.query.weight.size(0);
  auto pixel = [&](std::size_t b, std::size_t i, std::size_t j) {
    std::vector<double> v(c);
    for (std::size_t k = 0; k < c; ++k) v[k] = f.raw()[((b * c + k) * h + i) * w + j];
    return v;
  };
  std::vector<double> out(n * cg * h * w, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<std::vector<double>> keys, values;
    for (int s : scales) {
      if (static_cast<std::size_t>(s) > std::min(h, w)) continue;
      for (std::size_t bi = 0; bi + s <= h; bi += s)
        for (std::size_t bj = 0; bj + s <= w; bj += s) {
          std::vector<double> mean(c, 0.0), vmean(cg, 0.0);
          for (int di = 0; di < s; ++di)
            for (int dj = 0; dj < s; ++dj) {
              const auto p = pixel(b, bi + di, bj + dj);
              const auto pv = project(nl.value, p);
              for (std::size_t k = 0; k < c; ++k) mean[k] += p[k] / (s * s);
              for (std::size_t k = 0; k < cg; ++k) vmean[k] += pv[k] / (s * s);
            }
          keys.push_back(project(nl.key, mean));
          values.push_back(vmean);
        }
    }
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const auto q = project(nl.query, pixel(b, i, j));
        std::vector<double> logits;
        for (const auto& k : keys) {
          double d = 0;
          for (std::size_t t = 0; t < cg; ++t) d += q[t] * k[t];
          logits.push_back(d);
        }
        const double m = *std::max_element(logits.begin(), logits.end());
        double z = 0;
        for (double l : logits) z += std::exp(l - m);
        for (std::size_t t = 0; t < keys.size(); ++t) {
          const double a = std::exp(logits[t] - m) / z;
          for (std::size_t k = 0; k < cg; ++k) out[((b * cg + k) * h + i) * w + j] += a * values[t][k];
        }
      }
  }
  return out;
}

// Keys kernel written out from its piecewise definition.
inline double keys(double x) {
  const double a = -0.75;
  x = std::abs(x);
  if (x <= 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
  if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
  return 0;
}

// Full 2D weighted sum per output pixel over every source pixel whose
// stretched distance is inside the support, edges replicated.
inline std::vector<double> bicubic_ref(const Tensor<float>& img, int ho, int wo) {
  const int c = static_cast<int>(img.size(0)), h = static_cast<int>(img.size(1)), w = static_cast<int>(img.size(2));
  const double ry = double(h) / ho, rx = double(w) / wo;
  const double sy = std::max(1.0, ry), sx = std::max(1.0, rx);
  std::vector<double> out(static_cast<std::size_t>(c) * ho * wo);
  for (int ch = 0; ch < c; ++ch)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const double cy = (oy + 0.5) * ry - 0.5, cx = (ox + 0.5) * rx - 0.5;
        double acc = 0, norm = 0;
        for (int j = static_cast<int>(std::floor(cy - 2 * sy)) - 1; j <= cy + 2 * sy + 1; ++j)
          for (int i = static_cast<int>(std::floor(cx - 2 * sx)) - 1; i <= cx + 2 * sx + 1; ++i) {
            const double wt = keys((j - cy) / sy) * keys((i - cx) / sx);
            if (wt == 0) continue;
            acc += wt * img.raw()[(static_cast<std::size_t>(ch) * h + std::clamp(j, 0, h - 1)) * w + std::clamp(i, 0, w - 1)];
            norm += wt;
          }
        out[(static_cast<std::size_t>(ch) * ho + oy) * wo + ox] = acc / norm;
      }
  return out;
}

inline double y_of(double r, double g, double b) { return (65.481 * r + 128.553 * g + 24.966 * b + 16) / 255; }

// Direct formula over the shaved region of every channel.
inline double psnr_ref(const Tensor<float>& a, const Tensor<float>& b, int shave, bool luma) {
  const std::size_t c = a.size(0), h = a.size(1), w = a.size(2);
  double se = 0;
  std::size_t n = 0;
  for (std::size_t y = shave; y < h - shave; ++y)
    for (std::size_t x = shave; x < w - shave; ++x) {
      if (luma) {
        const double d = y_of(a.at({0, y, x}), a.at({1, y, x}), a.at({2, y, x})) - y_of(b.at({0, y, x}), b.at({1, y, x}), b.at({2, y, x}));
        se += d * d;
        ++n;
        continue;
      }
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = double(a.at({ch, y, x})) - b.at({ch, y, x});
        se += d * d;
        ++n;
      }
    }
  return -10 * std::log10(se / n);
}

// Each 11x11 valid window evaluated on its own with normalized Gaussian weights.
inline double ssim_ref(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
  double g[11][11], gs = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y)
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          ma += g[i][j] / gs * a[(y + i) * w + x + j];
          mb += g[i][j] / gs * b[(y + i) * w + x + j];
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double da = a[(y + i) * w + x + j] - ma, db = b[(y + i) * w + x + j] - mb;
          va += g[i][j] / gs * da * da;
          vb += g[i][j] / gs * db * db;
          cov += g[i][j] / gs * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

}  // namespace oracle
