#pragma once

#include <cstddef>
#include <vector>

#include "ciaosr/layers.hpp"

namespace ciaosr {

struct EncoderConfig {
  int n_resblocks = 4;
  int n_feats = 64;
  int in_channels = 3;
};

/// EDSR-baseline body without the upsampler: head conv, residual blocks,
/// tail conv with a global skip from the head output. Keeps H and W.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(const EncoderConfig& cfg);

  /// image: N x in_channels x H x W -> N x n_feats x H x W
  Tensor<T> encode(const Tensor<T>& image) const;

  void init(Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct ResBlock {
    Conv2d<T> conv1;
    Conv2d<T> conv2;
  };

  EncoderConfig cfg_;
  Conv2d<T> head_;
  std::vector<ResBlock> blocks_;
  Conv2d<T> tail_;
};

}  // namespace ciaosr
