#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ciaosr/metrics.hpp"
#include "ciaosr/model.hpp"

namespace ciaosr {

/// Maps a 3 x h x w LR image to 3 x h_out x w_out.
using Upscaler = std::function<Tensor<float>(const Tensor<float>& lr, int h_out, int w_out)>;

Upscaler model_upscaler(const SrModel<float>& model);
Upscaler bicubic_upscaler();

/// LR size for evaluating GT of size (h, w) at scale s: round(h / s), round(w / s).
std::pair<int, int> degraded_size(int h, int w, double scale);

/// Bicubic-downscales gt by s; the LR input the evaluation feeds a model.
Tensor<float> degrade(const Tensor<float>& gt, double scale);

struct MethodScores {
  double psnr_rgb = 0;
  double psnr_y = 0;
  double ssim = 0;
};

struct ScaleRow {
  double scale = 0;
  int images = 0;
  MethodScores model;
  MethodScores bicubic;
  std::optional<MethodScores> baseline;
};

/// Scores one SR output against its GT. Predictions are clamped to [0, 1].
MethodScores score(const Tensor<float>& sr, const Tensor<float>& gt, double scale);

/// Per-scale means over images. Scales whose LR would be under 8 px on
/// either side for an image skip that image with a warning.
std::vector<ScaleRow> evaluate(const Upscaler& model, const std::vector<Tensor<float>>& images,
                               const std::vector<double>& scales, const Upscaler* baseline = nullptr);

/// Header: scale,images,psnr_rgb,psnr_y,ssim,bicubic_psnr_rgb,bicubic_psnr_y,
/// bicubic_ssim[,<name>_psnr_rgb,<name>_psnr_y,<name>_ssim],lpips
std::string metric_csv(const std::vector<ScaleRow>& rows, const std::string& baseline_name = "");

/// Parses "2,3,4.5" into {2, 3, 4.5}.
std::vector<double> parse_scale_list(const std::string& text);

}  // namespace ciaosr
