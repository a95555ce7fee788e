#include "ciaosr/encoder.hpp"

#include <stdexcept>

#include "ciaosr/ops.hpp"

namespace ciaosr {

template <typename T>
Encoder<T>::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.n_resblocks < 0 || cfg.n_feats <= 0 || cfg.in_channels <= 0)
    throw std::invalid_argument("encoder: invalid configuration");
  const auto feats = static_cast<std::size_t>(cfg.n_feats);
  head_ = Conv2d<T>(static_cast<std::size_t>(cfg.in_channels), feats, 3);
  for (int i = 0; i < cfg.n_resblocks; ++i) blocks_.push_back({Conv2d<T>(feats, feats, 3), Conv2d<T>(feats, feats, 3)});
  tail_ = Conv2d<T>(feats, feats, 3);
}

template <typename T>
Tensor<T> Encoder<T>::encode(const Tensor<T>& image) const {
  if (image.dim() != 4 || image.size(1) != static_cast<std::size_t>(cfg_.in_channels))
    throw ShapeError("encoder: expected N x " + std::to_string(cfg_.in_channels) + " x H x W input, got " +
                     shape_string(image.shape()));
  Tensor<T> head = head_.forward(image);
  Tensor<T> x = head;
  for (const auto& b : blocks_) x = add(x, b.conv2.forward(relu(b.conv1.forward(x))));
  return add(head, tail_.forward(x));
}

template <typename T>
void Encoder<T>::init(Rng& rng) {
  head_.init(rng);
  for (auto& b : blocks_) {
    b.conv1.init(rng);
    b.conv2.init(rng);
  }
  tail_.init(rng);
}

template <typename T>
void Encoder<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  head_.collect(out, prefix + ".head");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].conv1.collect(out, prefix + ".body." + std::to_string(i) + ".conv1");
    blocks_[i].conv2.collect(out, prefix + ".body." + std::to_string(i) + ".conv2");
  }
  tail_.collect(out, prefix + ".tail");
}

template class Encoder<float>;
template class Encoder<double>;

}  // namespace ciaosr
