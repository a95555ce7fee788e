#include "ciaosr/layers.hpp"

#include <cmath>

#include "ciaosr/ops.hpp"

namespace ciaosr {
namespace {
// Same convention as the common framework default for linear and conv
// layers: weights and biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void fan_in_uniform(Tensor<T>& w, Tensor<T>& b, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  for (T& v : b.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}
}  // namespace

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out)
    : weight(Shape{in, out}, T(0), true), bias(Shape{out}, T(0), true) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return add_bias(matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::init(Rng& rng) {
  fan_in_uniform(weight, bias, in_features(), rng);
}

template <typename T>
void Linear<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Mlp<T>::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::size_t prev = in;
  for (auto width : hidden) {
    layers.emplace_back(prev, width);
    prev = width;
  }
  layers.emplace_back(prev, out);
}

template <typename T>
Tensor<T> Mlp<T>::forward(const Tensor<T>& x) const {
  return forward_from_first_preactivation(layers.front().forward(x));
}

template <typename T>
Tensor<T> Mlp<T>::forward_from_first_preactivation(const Tensor<T>& pre) const {
  Tensor<T> h = pre;
  for (std::size_t i = 1; i < layers.size(); ++i) h = layers[i].forward(relu(h));
  return h;
}

template <typename T>
void Mlp<T>::init(Rng& rng) {
  for (auto& l : layers) l.init(rng);
}

template <typename T>
void Mlp<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + "." + std::to_string(i));
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, int kernel)
    : weight(Shape{out, in, static_cast<std::size_t>(kernel), static_cast<std::size_t>(kernel)}, T(0), true),
      bias(Shape{out}, T(0), true),
      padding(kernel / 2) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, padding);
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  fan_in_uniform(weight, bias, weight.size(1) * weight.size(2) * weight.size(3), rng);
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template class Linear<float>;
template class Linear<double>;
template class Mlp<float>;
template class Mlp<double>;
template class Conv2d<float>;
template class Conv2d<double>;

}  // namespace ciaosr
