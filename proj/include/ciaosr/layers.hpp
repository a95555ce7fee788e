#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ciaosr/optim.hpp"
#include "ciaosr/rng.hpp"
#include "ciaosr/tensor.hpp"

namespace ciaosr {

/// y = x W + b with W stored in x out layout.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out);

  Tensor<T> forward(const Tensor<T>& x) const;
  /// Weights and bias uniform in +-1/sqrt(fan_in).
  void init(Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix) const;

  std::size_t in_features() const { return weight.size(0); }
  std::size_t out_features() const { return weight.size(1); }

  Tensor<T> weight;
  Tensor<T> bias;
};

/// Stack of Linear layers with ReLU between them (none after the last).
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out);

  Tensor<T> forward(const Tensor<T>& x) const;
  /// Everything after the first layer's affine map; used when the first
  /// layer's pre-activation is assembled piecewise.
  Tensor<T> forward_from_first_preactivation(const Tensor<T>& pre) const;

  void init(Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix) const;

  std::size_t in_features() const { return layers.front().in_features(); }
  std::size_t out_features() const { return layers.back().out_features(); }

  std::vector<Linear<T>> layers;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, int kernel);

  Tensor<T> forward(const Tensor<T>& x) const;
  void init(Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix) const;

  Tensor<T> weight;
  Tensor<T> bias;
  int padding = 0;
};

}  // namespace ciaosr
