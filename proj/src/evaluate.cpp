#include "ciaosr/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ciaosr/log.hpp"
#include "ciaosr/resample.hpp"

namespace ciaosr {

Upscaler model_upscaler(const SrModel<float>& model) {
  return [&model](const Tensor<float>& lr, int h, int w) { return super_resolve(model, lr, h, w); };
}

Upscaler bicubic_upscaler() {
  return [](const Tensor<float>& lr, int h, int w) { return bicubic_resize(lr, h, w); };
}

std::pair<int, int> degraded_size(int h, int w, double scale) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) throw std::invalid_argument("evaluate: scale must be a finite real >= 1");
  return {std::max(1, static_cast<int>(std::lround(h / scale))), std::max(1, static_cast<int>(std::lround(w / scale)))};
}

Tensor<float> degrade(const Tensor<float>& gt, double scale) {
  const auto [h, w] = degraded_size(static_cast<int>(gt.size(1)), static_cast<int>(gt.size(2)), scale);
  if (h == static_cast<int>(gt.size(1)) && w == static_cast<int>(gt.size(2))) return gt.clone();
  return bicubic_resize(gt, h, w);
}

MethodScores score(const Tensor<float>& sr, const Tensor<float>& gt, double scale) {
  Tensor<float> clamped = sr.clone();
  for (auto& v : clamped.data()) v = std::clamp(v, 0.0f, 1.0f);
  MethodScores s;
  s.psnr_rgb = psnr(clamped, gt, metric_config_for(MetricMode::kRgb, scale));
  const MetricConfig y = metric_config_for(MetricMode::kY, scale);
  s.psnr_y = psnr(clamped, gt, y);
  s.ssim = ssim(clamped, gt, y);
  return s;
}

std::vector<ScaleRow> evaluate(const Upscaler& model, const std::vector<Tensor<float>>& images,
                               const std::vector<double>& scales, const Upscaler* baseline) {
  if (images.empty()) throw std::invalid_argument("evaluate: no images");
  const Upscaler bicubic = bicubic_upscaler();
  std::vector<ScaleRow> rows;
  for (double s : scales) {
    ScaleRow row;
    row.scale = s;
    if (baseline) row.baseline = MethodScores{};
    auto accumulate = [](MethodScores& acc, const MethodScores& v) {
      acc.psnr_rgb += v.psnr_rgb;
      acc.psnr_y += v.psnr_y;
      acc.ssim += v.ssim;
    };
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Tensor<float>& gt = images[i];
      const int h = static_cast<int>(gt.size(1)), w = static_cast<int>(gt.size(2));
      const auto [lh, lw] = degraded_size(h, w, s);
      if (lh < 8 || lw < 8) {
        char msg[160];
        std::snprintf(msg, sizeof(msg), "evaluate: skipping image %zu at x%g (LR %dx%d is under 8 px)", i, s, lh, lw);
        warn_once(msg);
        continue;
      }
      const Tensor<float> lr = degrade(gt, s);
      accumulate(row.model, score(model(lr, h, w), gt, s));
      accumulate(row.bicubic, score(bicubic(lr, h, w), gt, s));
      if (baseline) accumulate(*row.baseline, score((*baseline)(lr, h, w), gt, s));
      ++row.images;
    }
    if (row.images == 0) continue;
    auto finish = [n = row.images](MethodScores& m) {
      m.psnr_rgb /= n;
      m.psnr_y /= n;
      m.ssim /= n;
    };
    finish(row.model);
    finish(row.bicubic);
    if (row.baseline) finish(*row.baseline);
    rows.push_back(row);
  }
  return rows;
}

std::string metric_csv(const std::vector<ScaleRow>& rows, const std::string& baseline_name) {
  std::ostringstream out;
  out << "scale,images,psnr_rgb,psnr_y,ssim,bicubic_psnr_rgb,bicubic_psnr_y,bicubic_ssim";
  if (!baseline_name.empty())
    out << ',' << baseline_name << "_psnr_rgb," << baseline_name << "_psnr_y," << baseline_name << "_ssim";
  out << ",lpips\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.6f", v);
    out << buf;
  };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%g,%d", r.scale, r.images);
    out << buf;
    for (const MethodScores* m : {&r.model, &r.bicubic}) {
      put(m->psnr_rgb);
      put(m->psnr_y);
      put(m->ssim);
    }
    if (!baseline_name.empty() && r.baseline) {
      put(r.baseline->psnr_rgb);
      put(r.baseline->psnr_y);
      put(r.baseline->ssim);
    }
    out << ",n/a\n";
  }
  return out.str();
}

std::vector<double> parse_scale_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || !std::isfinite(v) || v < 1.0)
      throw std::invalid_argument("bad scale '" + item + "' (expected a real >= 1)");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty scale list");
  return out;
}

}  // namespace ciaosr
