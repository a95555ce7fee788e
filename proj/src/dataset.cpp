#include "ciaosr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ciaosr/image_io.hpp"

namespace ciaosr {

void validate(const DegradationConfig& cfg) {
  if (cfg.scale_min < 1.0 || cfg.scale_max < cfg.scale_min)
    throw std::invalid_argument("degradation: scale range must satisfy 1 <= low <= high");
  if (cfg.patch_lr < 8) throw std::invalid_argument("degradation: patch size must be >= 8");
}

namespace {
Tensor<float> crop(const Tensor<float>& img, int top, int left, int h, int w) {
  const std::size_t ih = img.size(1), iw = img.size(2);
  Tensor<float> out(Shape{3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(img.raw() + (c * ih + top + y) * iw + left, w, out.raw() + (c * h + y) * w);
  return out;
}
}  // namespace

PatchSample sample_training_pair(const Tensor<float>& hr, const DegradationConfig& cfg, Rng& rng) {
  validate(cfg);
  if (hr.dim() != 3 || hr.size(0) != 3) throw ShapeError("sample_training_pair: expects a 3 x H x W image");
  const int h = static_cast<int>(hr.size(1)), w = static_cast<int>(hr.size(2));
  const int p = cfg.patch_lr;
  if (h < p || w < p)
    throw std::invalid_argument("sample_training_pair: image " + std::to_string(h) + "x" + std::to_string(w) +
                                " is smaller than the " + std::to_string(p) + "px patch");
  int gt = 0;
  for (int attempt = 0; attempt < 10 && gt == 0; ++attempt) {
    const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const int size = static_cast<int>(std::ceil(p * s - 1e-9));
    if (size <= h && size <= w) gt = size;
  }
  int top, left;
  if (gt == 0) {
    gt = std::min(h, w);  // center-crop fallback at the largest scale that fits
    top = (h - gt) / 2;
    left = (w - gt) / 2;
  } else {
    top = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - gt + 1)));
    left = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - gt + 1)));
  }

  PatchSample sample;
  const Tensor<float> gt_patch = crop(hr, top, left, gt, gt);
  sample.lr = gt == p ? gt_patch : bicubic_resize(gt_patch, p, p, cfg.bicubic);
  sample.scale = scale_vector(p, p, gt, gt);

  const std::size_t pixels = static_cast<std::size_t>(gt) * gt;
  const std::size_t want = std::min(pixels, cfg.queries ? cfg.queries : static_cast<std::size_t>(p) * p);
  // partial Fisher-Yates: first `want` entries are a uniform sample without replacement
  std::vector<std::size_t> order(pixels);
  for (std::size_t i = 0; i < pixels; ++i) order[i] = i;
  for (std::size_t i = 0; i < want; ++i) std::swap(order[i], order[i + rng.below(pixels - i)]);

  const CoordGrid grid(gt, gt);
  sample.coords.reserve(want);
  sample.gt_rgb.reserve(want * 3);
  for (std::size_t i = 0; i < want; ++i) {
    const int y = static_cast<int>(order[i] / gt), x = static_cast<int>(order[i] % gt);
    sample.coords.push_back(grid.at(y, x));
    for (std::size_t c = 0; c < 3; ++c) sample.gt_rgb.push_back(gt_patch.raw()[(c * gt + y) * gt + x]);
  }
  return sample;
}

Tensor<float> synthetic_texture(int height, int width, Rng& rng) {
  const auto h = static_cast<std::size_t>(height), w = static_cast<std::size_t>(width);
  Tensor<float> img(Shape{3, h, w});
  std::vector<double> px(3 * h * w);
  auto color = [&] { return std::array<double, 3>{rng.uniform(), rng.uniform(), rng.uniform()}; };
  auto paint = [&](std::size_t y, std::size_t x, const std::array<double, 3>& c, double alpha) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double& v = px[(ch * h + y) * w + x];
      v = (1 - alpha) * v + alpha * c[ch];
    }
  };

  // smooth background
  const auto c0 = color(), c1 = color();
  const double ang = rng.uniform(0, 2 * std::numbers::pi);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double t = 0.5 + 0.5 * std::sin(ang) * (2.0 * y / h - 1) * 0.7 + 0.5 * std::cos(ang) * (2.0 * x / w - 1) * 0.7;
      t = std::clamp(t, 0.0, 1.0);
      for (std::size_t ch = 0; ch < 3; ++ch) px[(ch * h + y) * w + x] = (1 - t) * c0[ch] + t * c1[ch];
    }

  const int layers = 6 + static_cast<int>(rng.below(5));
  for (int l = 0; l < layers; ++l) {
    const auto kind = rng.below(4);
    const auto col = color(), col2 = color();
    const double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
    const double ry = rng.uniform(0.1, 0.35) * h, rx = rng.uniform(0.1, 0.35) * w;
    const double theta = rng.uniform(0, std::numbers::pi);
    const double period = rng.uniform(5.0, 20.0);
    const double cell = rng.uniform(4.0, 14.0);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = y - cy, dx = x - cx;
        const bool in_rect = std::abs(dy) < ry && std::abs(dx) < rx;
        switch (kind) {
          case 0:  // disc
            if (dy * dy / (ry * ry) + dx * dx / (rx * rx) < 1.0) paint(y, x, col, 1.0);
            break;
          case 1:  // rotated rectangle
          {
            const double u = dy * std::cos(theta) + dx * std::sin(theta);
            const double v = -dy * std::sin(theta) + dx * std::cos(theta);
            if (std::abs(u) < ry && std::abs(v) < rx * 0.5) paint(y, x, col, 1.0);
            break;
          }
          case 2:  // grating patch
            if (in_rect) {
              const double phase = (dy * std::sin(theta) + dx * std::cos(theta)) * 2 * std::numbers::pi / period;
              const double t = 0.5 + 0.5 * std::sin(phase);
              for (std::size_t ch = 0; ch < 3; ++ch) px[(ch * h + y) * w + x] = (1 - t) * col[ch] + t * col2[ch];
            }
            break;
          default:  // checkerboard patch
            if (in_rect) {
              const long a = static_cast<long>(std::floor(dy / cell)), b = static_cast<long>(std::floor(dx / cell));
              paint(y, x, ((a + b) & 1) ? col : col2, 1.0);
            }
            break;
        }
      }
  }
  for (std::size_t i = 0; i < px.size(); ++i) img.raw()[i] = static_cast<float>(std::clamp(px[i], 0.0, 1.0));
  return img;
}

void write_texture_set(const std::filesystem::path& dir, int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 8) throw std::invalid_argument("texture set: count must be >= 1 and size >= 8");
  std::filesystem::create_directories(dir);
  const Rng root(seed);
  for (int i = 0; i < count; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof(name), "texture_%03d.png", i);
    save_image(synthetic_texture(size, size, rng), dir / name);
  }
}

std::vector<Tensor<float>> load_image_dir(const std::filesystem::path& dir) {
  std::vector<Tensor<float>> out;
  for (const auto& p : list_images(dir)) out.push_back(load_image(p));
  return out;
}

}  // namespace ciaosr
