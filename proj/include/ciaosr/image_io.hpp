#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "ciaosr/tensor.hpp"

// 8-bit RGB images as 3 x H x W float tensors in [0, 1].
namespace ciaosr {

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Rgb8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

Rgb8 decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Rgb8& image);
Rgb8 decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Rgb8& image);

/// Clamps to [0, 1] and rounds half-to-even onto 0..255.
Rgb8 quantize(const Tensor<float>& image);
Tensor<float> dequantize(const Rgb8& image);

/// PNG or binary PPM, detected from the file signature.
Tensor<float> load_image(const std::filesystem::path& path);
/// Format chosen by extension (.png or .ppm).
void save_image(const Tensor<float>& image, const std::filesystem::path& path);

/// Image files in dir, sorted lexicographically.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ciaosr
