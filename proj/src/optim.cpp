#include "ciaosr/optim.hpp"

#include <cmath>

namespace ciaosr {

template <typename T>
void adam_step(ParamList<T>& params, AdamState<T>& state, double lr) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.numel(), T(0));
      state.v[i].assign(params[i].tensor.numel(), T(0));
    }
  }
  state.step += 1;
  const double b1 = state.hyper.beta1, b2 = state.hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    if (state.m[i].size() != p.numel()) throw ShapeError("adam_step: state shape mismatch for " + params[i].name);
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1.0 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1.0 - b2) * g[j] * g[j]);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] = static_cast<T>(w[j] - lr * mhat / (std::sqrt(vhat) + state.hyper.eps));
    }
  }
}

template <typename T>
void zero_grads(ParamList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

template <typename T>
double clip_grad_norm(ParamList<T>& params, double max_norm) {
  double sq = 0;
  for (auto& p : params)
    if (p.tensor.has_grad())
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      if (p.tensor.has_grad())
        for (T& g : p.tensor.mutable_grad()) g *= factor;
  }
  return norm;
}

template void adam_step<float>(ParamList<float>&, AdamState<float>&, double);
template void adam_step<double>(ParamList<double>&, AdamState<double>&, double);
template void zero_grads<float>(ParamList<float>&);
template void zero_grads<double>(ParamList<double>&);
template double clip_grad_norm<float>(ParamList<float>&, double);
template double clip_grad_norm<double>(ParamList<double>&, double);

}  // namespace ciaosr
