#include "ciaosr/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace ciaosr {
namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4], std::span<const std::uint8_t> data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

std::uint8_t paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace

Rgb8 decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(kPngSignature, kPngSignature + 8, bytes.begin()))
    throw ImageError("png: bad signature");
  std::size_t pos = 8;
  Rgb8 img;
  bool have_header = false, have_end = false;
  std::vector<std::uint8_t> idat;
  while (pos + 12 <= bytes.size()) {
    const std::uint32_t len = read_be32(bytes.data() + pos);
    if (len > bytes.size() - pos - 12) throw ImageError("png: truncated chunk");
    const std::uint8_t* type = bytes.data() + pos + 4;
    const std::uint8_t* data = type + 4;
    const std::uint32_t stored_crc = read_be32(data + len);
    if (crc32(crc32(0L, nullptr, 0), type, len + 4) != stored_crc) throw ImageError("png: chunk CRC mismatch");
    const std::string name(reinterpret_cast<const char*>(type), 4);
    if (name == "IHDR") {
      if (len != 13) throw ImageError("png: bad IHDR");
      img.width = static_cast<int>(read_be32(data));
      img.height = static_cast<int>(read_be32(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (img.width <= 0 || img.height <= 0) throw ImageError("png: empty image");
      if (depth != 8) throw ImageError("png: unsupported bit depth " + std::to_string(depth));
      if (color != 2) throw ImageError("png: non-RGB color type " + std::to_string(color));
      if (data[10] != 0 || data[11] != 0) throw ImageError("png: unsupported compression or filter method");
      if (interlace != 0) throw ImageError("png: interlaced images are not supported");
      have_header = true;
    } else if (name == "IDAT") {
      if (!have_header) throw ImageError("png: IDAT before IHDR");
      idat.insert(idat.end(), data, data + len);
    } else if (name == "IEND") {
      have_end = true;
      break;
    } else if (!(type[0] & 0x20)) {
      throw ImageError("png: unknown critical chunk " + name);
    }
    pos += 12 + len;
  }
  if (!have_header || !have_end) throw ImageError("png: missing IHDR or IEND");

  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  std::vector<std::uint8_t> raw((stride + 1) * img.height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK || raw_len != raw.size())
    throw ImageError("png: corrupt image data");

  img.pixels.assign(stride * img.height, 0);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = img.pixels.data() + y * stride;
    const std::uint8_t* up = y > 0 ? dst - stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= 3 ? dst[i - 3] : 0;
      const int b = up ? up[i] : 0;
      const int c = (up && i >= 3) ? up[i - 3] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw ImageError("png: bad filter type " + std::to_string(filter));
      }
      dst[i] = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const Rgb8& image) {
  const std::size_t stride = static_cast<std::size_t>(image.width) * 3;
  if (image.width <= 0 || image.height <= 0 || image.pixels.size() != stride * image.height)
    throw ImageError("png: invalid image buffer");
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * image.height);
  for (int y = 0; y < image.height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), image.pixels.begin() + y * stride, image.pixels.begin() + (y + 1) * stride);
  }
  uLongf packed_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> packed(packed_len);
  if (compress2(packed.data(), &packed_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw ImageError("png: compression failed");
  packed.resize(packed_len);

  std::vector<std::uint8_t> out(kPngSignature, kPngSignature + 8);
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(image.width));
  put_be32(ihdr, static_cast<std::uint32_t>(image.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", {});
  return out;
}

namespace {
// Next whitespace-delimited PPM header token, skipping # comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(bytes[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok.push_back(static_cast<char>(bytes[pos++]));
  if (tok.empty()) throw ImageError("ppm: truncated header");
  return tok;
}

int ppm_int(const std::string& tok) {
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw ImageError("ppm: bad header field '" + tok + "'");
  return std::stoi(tok);
}
}  // namespace

Rgb8 decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (ppm_token(bytes, pos) != "P6") throw ImageError("ppm: only binary P6 is supported");
  Rgb8 img;
  img.width = ppm_int(ppm_token(bytes, pos));
  img.height = ppm_int(ppm_token(bytes, pos));
  const int maxval = ppm_int(ppm_token(bytes, pos));
  if (img.width <= 0 || img.height <= 0) throw ImageError("ppm: empty image");
  if (maxval != 255) throw ImageError("ppm: only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ImageError("ppm: malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  if (bytes.size() - pos < n) throw ImageError("ppm: truncated pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Rgb8& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Rgb8 quantize(const Tensor<float>& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ImageError("image: expected 3 x H x W, got " + shape_string(image.shape()));
  Rgb8 out;
  out.height = static_cast<int>(image.size(1));
  out.width = static_cast<int>(image.size(2));
  const std::size_t plane = image.size(1) * image.size(2);
  out.pixels.resize(plane * 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const double v = std::clamp(static_cast<double>(image.raw()[c * plane + i]), 0.0, 1.0);
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::nearbyint(v * 255.0));
    }
  return out;
}

Tensor<float> dequantize(const Rgb8& image) {
  const auto h = static_cast<std::size_t>(image.height), w = static_cast<std::size_t>(image.width);
  Tensor<float> out(Shape{3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) out.raw()[c * h * w + i] = static_cast<float>(image.pixels[i * 3 + c] / 255.0);
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageError("write failed for " + path.string());
}

Tensor<float> load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8, bytes.begin())) return dequantize(decode_png(bytes));
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return dequantize(decode_ppm(bytes));
  throw ImageError(path.string() + ": unsupported image format");
}

void save_image(const Tensor<float>& image, const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  const Rgb8 q = quantize(image);
  if (ext == ".png")
    write_file(path, encode_png(q));
  else if (ext == ".ppm")
    write_file(path, encode_ppm(q));
  else
    throw ImageError(path.string() + ": unsupported output extension (use .png or .ppm)");
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ImageError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace ciaosr
