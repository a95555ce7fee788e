#pragma once

#include "ciaosr/tensor.hpp"

namespace ciaosr {

/// Keys cubic convolution kernel with parameter a.
double cubic_kernel(double x, double a = -0.75);

struct BicubicOptions {
  double a = -0.75;
  /// Stretch the kernel by the scale factor when shrinking.
  bool antialias = true;
};

/// Separable cubic resampling of a C x H x W image with half-pixel centers
/// and replicated edges. Taps are renormalized to sum to 1.
Tensor<float> bicubic_resize(const Tensor<float>& image, int h_out, int w_out, const BicubicOptions& opt = {});

}  // namespace ciaosr
