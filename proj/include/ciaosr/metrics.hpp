#pragma once

#include <limits>

#include "ciaosr/tensor.hpp"

namespace ciaosr {

enum class MetricMode { kRgb, kY };

struct MetricConfig {
  MetricMode mode = MetricMode::kRgb;
  /// Pixels removed from every side before scoring.
  int border_shave = 0;
  double data_range = 1.0;
};

/// Benchmark convention: RGB without shave, Y with ceil(scale) shave.
MetricConfig metric_config_for(MetricMode mode, double scale);

/// Returned by psnr() for identical inputs.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// BT.601 luma of a 3 x H x W image in [0, 1]; result is 1 x H x W in
/// [16/255, 235/255].
Tensor<double> rgb_to_y(const Tensor<float>& rgb);

double psnr(const Tensor<float>& pred, const Tensor<float>& gt, const MetricConfig& cfg = {});

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5). 3-channel
/// inputs are converted to Y first.
double ssim(const Tensor<float>& pred, const Tensor<float>& gt, const MetricConfig& cfg = {});
double ssim_plane(const Tensor<double>& a, const Tensor<double>& b, double data_range = 1.0);

}  // namespace ciaosr
