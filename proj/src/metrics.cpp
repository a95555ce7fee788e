#include "ciaosr/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ciaosr {

MetricConfig metric_config_for(MetricMode mode, double scale) {
  MetricConfig cfg;
  cfg.mode = mode;
  cfg.border_shave = mode == MetricMode::kY ? static_cast<int>(std::ceil(scale - 1e-9)) : 0;
  return cfg;
}

Tensor<double> rgb_to_y(const Tensor<float>& rgb) {
  if (rgb.dim() != 3 || rgb.size(0) != 3) throw ShapeError("rgb_to_y: expects 3 x H x W");
  const std::size_t plane = rgb.size(1) * rgb.size(2);
  Tensor<double> y(Shape{1, rgb.size(1), rgb.size(2)});
  const float* r = rgb.raw();
  const float* g = r + plane;
  const float* b = g + plane;
  for (std::size_t i = 0; i < plane; ++i) y.raw()[i] = (65.481 * r[i] + 128.553 * g[i] + 24.966 * b[i] + 16.0) / 255.0;
  return y;
}

namespace {
Tensor<double> to_double(const Tensor<float>& x) {
  Tensor<double> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out.raw()[i] = x.raw()[i];
  return out;
}

Tensor<double> shave(const Tensor<double>& x, int border) {
  if (border == 0) return x;
  const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
  const auto b = static_cast<std::size_t>(border);
  if (border < 0 || 2 * b >= h || 2 * b >= w) throw std::invalid_argument("metrics: border shave too large for image");
  Tensor<double> out(Shape{c, h - 2 * b, w - 2 * b});
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = b; y < h - b; ++y)
      for (std::size_t xx = b; xx < w - b; ++xx) out.raw()[k++] = x.raw()[(ch * h + y) * w + xx];
  return out;
}

Tensor<double> prepare(const Tensor<float>& img, const MetricConfig& cfg) {
  if (img.dim() != 3) throw ShapeError("metrics: expects C x H x W");
  Tensor<double> planes = (cfg.mode == MetricMode::kY && img.size(0) == 3) ? rgb_to_y(img) : to_double(img);
  return shave(planes, cfg.border_shave);
}
}  // namespace

double psnr(const Tensor<float>& pred, const Tensor<float>& gt, const MetricConfig& cfg) {
  if (pred.shape() != gt.shape())
    throw ShapeError("psnr: shapes differ " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  const Tensor<double> a = prepare(pred, cfg), b = prepare(gt, cfg);
  double se = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.raw()[i] - b.raw()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.numel());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(cfg.data_range * cfg.data_range / mse);
}

double ssim_plane(const Tensor<double>& a, const Tensor<double>& b, double data_range) {
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  if (a.shape() != b.shape()) throw ShapeError("ssim: shapes differ");
  const std::size_t h = a.size(a.dim() - 2), w = a.size(a.dim() - 1);
  if (a.numel() != h * w) throw ShapeError("ssim: expects a single plane");
  if (h < kWin || w < kWin) throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  double kernel[kWin];
  double ksum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    kernel[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const double c1 = std::pow(0.01 * data_range, 2), c2 = std::pow(0.03 * data_range, 2);
  const std::size_t ho = h - kWin + 1, wo = w - kWin + 1;
  // separable valid-window filtering of x, y, x^2, y^2, xy
  auto filter = [&](auto value) {
    std::vector<double> rows(h * wo), out(ho * wo);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = 0;
        for (int k = 0; k < kWin; ++k) acc += kernel[k] * value(y * w + x + k);
        rows[y * wo + x] = acc;
      }
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = 0;
        for (int k = 0; k < kWin; ++k) acc += kernel[k] * rows[(y + k) * wo + x];
        out[y * wo + x] = acc;
      }
    return out;
  };
  const double* pa = a.raw();
  const double* pb = b.raw();
  const auto mu_a = filter([&](std::size_t i) { return pa[i]; });
  const auto mu_b = filter([&](std::size_t i) { return pb[i]; });
  const auto aa = filter([&](std::size_t i) { return pa[i] * pa[i]; });
  const auto bb = filter([&](std::size_t i) { return pb[i] * pb[i]; });
  const auto ab = filter([&](std::size_t i) { return pa[i] * pb[i]; });
  double total = 0;
  for (std::size_t i = 0; i < ho * wo; ++i) {
    const double va = aa[i] - mu_a[i] * mu_a[i];
    const double vb = bb[i] - mu_b[i] * mu_b[i];
    const double cov = ab[i] - mu_a[i] * mu_b[i];
    total += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(ho * wo);
}

double ssim(const Tensor<float>& pred, const Tensor<float>& gt, const MetricConfig& cfg) {
  if (pred.shape() != gt.shape())
    throw ShapeError("ssim: shapes differ " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  MetricConfig luma = cfg;
  luma.mode = MetricMode::kY;
  const Tensor<double> a = prepare(pred, luma), b = prepare(gt, luma);
  if (a.size(0) != 1) throw ShapeError("ssim: expects single-channel or RGB input");
  return ssim_plane(a, b, cfg.data_range);
}

}  // namespace ciaosr
