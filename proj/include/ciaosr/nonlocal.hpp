#pragma once

#include <cstddef>
#include <vector>

#include "ciaosr/layers.hpp"

namespace ciaosr {

struct NonLocalConfig {
  bool enabled = true;
  int channels = 64;
  std::vector<int> scales = {2, 3, 4};
  /// Largest H*W handled in one attention; larger maps are tiled.
  std::size_t max_pixels = 96 * 96;
  int tile = 96;
  bool scaled_logits = false;
};

/// Scale-aware non-local attention. Every LR position attends over the
/// tokens of the feature map mean-pooled at each factor in the scale set;
/// all factors share one softmax. Values are pooled like the keys.
template <typename T>
class NonLocalAttention {
 public:
  NonLocalAttention() = default;
  NonLocalAttention(int in_channels, const NonLocalConfig& cfg);

  /// N x C x H x W -> N x C_g x H x W. Throws when H*W exceeds the cap.
  /// attention, when given, receives the N x HW x T weight matrix.
  Tensor<T> forward(const Tensor<T>& feat, Tensor<T>* attention = nullptr) const;

  /// Abutting tiles, each attending only within itself.
  Tensor<T> forward_tiled(const Tensor<T>& feat, int tile) const;

  /// forward() when under the cap, otherwise forward_tiled() with cfg.tile.
  Tensor<T> apply(const Tensor<T>& feat) const;

  void init(Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix) const;
  const NonLocalConfig& config() const { return cfg_; }

  Conv2d<T> query;
  Conv2d<T> key;
  Conv2d<T> value;

 private:
  NonLocalConfig cfg_;
  int in_channels_ = 0;
};

}  // namespace ciaosr
