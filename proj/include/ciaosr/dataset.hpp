#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "ciaosr/coords.hpp"
#include "ciaosr/resample.hpp"
#include "ciaosr/rng.hpp"
#include "ciaosr/tensor.hpp"

namespace ciaosr {

struct DegradationConfig {
  double scale_min = 1.0;
  double scale_max = 4.0;
  int patch_lr = 48;
  /// GT pixels sampled per patch; 0 means patch_lr^2.
  std::size_t queries = 0;
  BicubicOptions bicubic;
};

/// One training example: an LR patch and GT samples from the matching
/// ceil(patch_lr * s) GT crop, with coordinates in the GT crop's frame.
struct PatchSample {
  Tensor<float> lr;             // 3 x patch_lr x patch_lr
  std::vector<Coord> coords;    // per sampled GT pixel
  std::vector<float> gt_rgb;    // coords.size() x 3
  Scale scale;
};

void validate(const DegradationConfig& cfg);

PatchSample sample_training_pair(const Tensor<float>& hr, const DegradationConfig& cfg, Rng& rng);

/// Procedural texture: smooth background, gratings, checkerboards and
/// sharp-edged shapes.
Tensor<float> synthetic_texture(int height, int width, Rng& rng);

/// Writes count textures as texture_NNN.png into dir.
void write_texture_set(const std::filesystem::path& dir, int count, int size, std::uint64_t seed);

std::vector<Tensor<float>> load_image_dir(const std::filesystem::path& dir);

}  // namespace ciaosr
