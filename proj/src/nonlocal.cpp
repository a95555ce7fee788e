#include "ciaosr/nonlocal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ciaosr/log.hpp"
#include "ciaosr/ops.hpp"

namespace ciaosr {

template <typename T>
NonLocalAttention<T>::NonLocalAttention(int in_channels, const NonLocalConfig& cfg)
    : query(static_cast<std::size_t>(in_channels), static_cast<std::size_t>(cfg.channels), 1),
      key(static_cast<std::size_t>(in_channels), static_cast<std::size_t>(cfg.channels), 1),
      value(static_cast<std::size_t>(in_channels), static_cast<std::size_t>(cfg.channels), 1),
      cfg_(cfg),
      in_channels_(in_channels) {
  if (cfg.channels <= 0) throw std::invalid_argument("non-local: channel count must be positive");
  if (cfg.scales.empty()) throw std::invalid_argument("non-local: empty scale set");
  for (int s : cfg.scales)
    if (s < 2) throw std::invalid_argument("non-local: scale factors must be >= 2, got " + std::to_string(s));
}

namespace {
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  const std::size_t n = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  return reshape(permute(x, {0, 2, 3, 1}), Shape{n, hw, c});
}
}  // namespace

template <typename T>
Tensor<T> NonLocalAttention<T>::forward(const Tensor<T>& feat, Tensor<T>* attention) const {
  if (feat.dim() != 4) throw ShapeError("non-local: expects N x C x H x W");
  const std::size_t n = feat.size(0), h = feat.size(2), w = feat.size(3);
  if (h * w > cfg_.max_pixels)
    throw ShapeError("non-local: " + std::to_string(h) + "x" + std::to_string(w) + " exceeds the cap of " +
                     std::to_string(cfg_.max_pixels) + " pixels; tile the input");
  const auto cg = static_cast<std::size_t>(cfg_.channels);

  std::vector<Tensor<T>> keys, values;
  Tensor<T> projected_values = value.forward(feat);
  for (int s : cfg_.scales) {
    if (static_cast<std::size_t>(s) > std::min(h, w)) {
      warn_once("non-local: scale " + std::to_string(s) + " skipped for a " + std::to_string(h) + "x" +
                std::to_string(w) + " map");
      continue;
    }
    keys.push_back(to_tokens(key.forward(avg_downsample(feat, s))));
    values.push_back(to_tokens(avg_downsample(projected_values, s)));
  }
  if (keys.empty()) {
    warn_once("non-local: no scale fits a " + std::to_string(h) + "x" + std::to_string(w) + " map; output is zero");
    return Tensor<T>(Shape{n, cg, h, w});
  }
  Tensor<T> q = to_tokens(query.forward(feat));
  Tensor<T> k = keys.size() == 1 ? keys.front() : concat(keys, 1);
  Tensor<T> v = values.size() == 1 ? values.front() : concat(values, 1);
  Tensor<T> logits = bmm(q, k, true);
  if (cfg_.scaled_logits) logits = affine(logits, static_cast<T>(1.0 / std::sqrt(static_cast<double>(cg))), T(0));
  Tensor<T> weights = softmax(logits, 2);
  if (attention) *attention = weights;
  Tensor<T> g = bmm(weights, v);
  return permute(reshape(g, Shape{n, h, w, cg}), {0, 3, 1, 2});
}

namespace {
std::vector<std::pair<std::size_t, std::size_t>> split_balanced(std::size_t extent, std::size_t tile) {
  const std::size_t parts = (extent + tile - 1) / tile;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    std::size_t len = extent / parts + (i < extent % parts ? 1 : 0);
    out.emplace_back(start, len);
    start += len;
  }
  return out;
}
}  // namespace

template <typename T>
Tensor<T> NonLocalAttention<T>::forward_tiled(const Tensor<T>& feat, int tile) const {
  if (feat.dim() != 4) throw ShapeError("non-local: expects N x C x H x W");
  const int max_scale = *std::max_element(cfg_.scales.begin(), cfg_.scales.end());
  if (tile < max_scale)
    throw std::invalid_argument("non-local: tile " + std::to_string(tile) + " is smaller than scale factor " +
                                std::to_string(max_scale));
  if (static_cast<std::size_t>(tile) * tile > cfg_.max_pixels)
    throw std::invalid_argument("non-local: tile " + std::to_string(tile) + " exceeds the pixel cap");
  const auto rows = split_balanced(feat.size(2), static_cast<std::size_t>(tile));
  const auto cols = split_balanced(feat.size(3), static_cast<std::size_t>(tile));
  if (rows.size() == 1 && cols.size() == 1) return forward(feat);
  std::vector<Tensor<T>> bands;
  for (auto [r0, rh] : rows) {
    Tensor<T> band = narrow(feat, 2, r0, rh);
    std::vector<Tensor<T>> pieces;
    for (auto [c0, cw] : cols) pieces.push_back(forward(narrow(band, 3, c0, cw)));
    bands.push_back(pieces.size() == 1 ? pieces.front() : concat(pieces, 3));
  }
  return bands.size() == 1 ? bands.front() : concat(bands, 2);
}

template <typename T>
Tensor<T> NonLocalAttention<T>::apply(const Tensor<T>& feat) const {
  if (feat.dim() == 4 && feat.size(2) * feat.size(3) > cfg_.max_pixels) return forward_tiled(feat, cfg_.tile);
  return forward(feat);
}

template <typename T>
void NonLocalAttention<T>::init(Rng& rng) {
  query.init(rng);
  key.init(rng);
  value.init(rng);
}

template <typename T>
void NonLocalAttention<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
}

template class NonLocalAttention<float>;
template class NonLocalAttention<double>;

}  // namespace ciaosr
