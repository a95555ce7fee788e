#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ciaosr/tensor.hpp"

namespace ciaosr {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

template <typename T>
std::size_t count_parameters(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update over every parameter. Parameters without
/// a gradient buffer are treated as having zero gradient.
template <typename T>
void adam_step(ParamList<T>& params, AdamState<T>& state, double lr);

template <typename T>
void zero_grads(ParamList<T>& params);

/// Scales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamList<T>& params, double max_norm);

}  // namespace ciaosr
