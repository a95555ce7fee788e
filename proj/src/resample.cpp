#include "ciaosr/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ciaosr {

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {
struct Taps {
  std::vector<int> first;         // first source index per output (before clamping)
  std::vector<std::vector<double>> weights;
};

Taps axis_taps(int in, int out, const BicubicOptions& opt) {
  const double ratio = static_cast<double>(in) / out;
  const double stretch = opt.antialias ? std::max(ratio, 1.0) : 1.0;
  const double support = 2.0 * stretch;
  Taps taps;
  taps.first.resize(out);
  taps.weights.resize(out);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * ratio - 0.5;
    const int lo = static_cast<int>(std::floor(center - support)) + 1;
    const int hi = static_cast<int>(std::ceil(center + support)) - 1;
    taps.first[o] = lo;
    auto& w = taps.weights[o];
    double total = 0;
    for (int j = lo; j <= hi; ++j) {
      const double v = cubic_kernel((j - center) / stretch, opt.a);
      w.push_back(v);
      total += v;
    }
    for (auto& v : w) v /= total;
  }
  return taps;
}
}  // namespace

Tensor<float> bicubic_resize(const Tensor<float>& image, int h_out, int w_out, const BicubicOptions& opt) {
  if (image.dim() != 3) throw ShapeError("bicubic_resize: expects C x H x W");
  if (h_out < 1 || w_out < 1) throw std::invalid_argument("bicubic_resize: target size must be positive");
  const int c = static_cast<int>(image.size(0)), h = static_cast<int>(image.size(1)), w = static_cast<int>(image.size(2));
  const Taps ty = axis_taps(h, h_out, opt);
  const Taps tx = axis_taps(w, w_out, opt);

  // horizontal pass in double, then vertical
  std::vector<double> mid(static_cast<std::size_t>(c) * h * w_out);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y) {
      const float* row = image.raw() + (static_cast<std::size_t>(ch) * h + y) * w;
      double* dst = mid.data() + (static_cast<std::size_t>(ch) * h + y) * w_out;
      for (int o = 0; o < w_out; ++o) {
        double acc = 0;
        const auto& wt = tx.weights[o];
        for (std::size_t t = 0; t < wt.size(); ++t) acc += wt[t] * row[std::clamp(tx.first[o] + static_cast<int>(t), 0, w - 1)];
        dst[o] = acc;
      }
    }
  Tensor<float> out(Shape{static_cast<std::size_t>(c), static_cast<std::size_t>(h_out), static_cast<std::size_t>(w_out)});
  for (int ch = 0; ch < c; ++ch)
    for (int o = 0; o < h_out; ++o) {
      const auto& wt = ty.weights[o];
      float* dst = out.raw() + (static_cast<std::size_t>(ch) * h_out + o) * w_out;
      for (int x = 0; x < w_out; ++x) {
        double acc = 0;
        for (std::size_t t = 0; t < wt.size(); ++t) {
          const int sy = std::clamp(ty.first[o] + static_cast<int>(t), 0, h - 1);
          acc += wt[t] * mid[(static_cast<std::size_t>(ch) * h + sy) * w_out + x];
        }
        dst[x] = static_cast<float>(acc);
      }
    }
  return out;
}

}  // namespace ciaosr
