#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ciaosr/tensor.hpp"

// Differentiable operators. Image tensors are N x C x H x W, row-major.
namespace ciaosr {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Batched product of [B x m x k] and [B x k x n] (or [B x n x k] when
/// transpose_b is set).
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// y = alpha * x + beta
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T alpha, T beta);

/// Adds bias[n] along the last dimension.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits, int axis);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Mean absolute error; target is treated as a constant.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Contiguous sub-range [start, start + length) along axis.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start,
                 std::size_t length);

/// Rows of a 2-D table: out[r] = x[index[r]].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& index);

/// Cross-correlation, stride 1, zero padding. weight is O x C x k x k.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int padding);

/// Stacks each k x k neighborhood into channels (c * k*k + dy * k + dx),
/// replicating edge pixels.
template <typename T>
Tensor<T> unfold(const Tensor<T>& feat, int k = 3);

/// Non-overlapping s x s mean pooling; trailing rows/cols are dropped.
template <typename T>
Tensor<T> avg_downsample(const Tensor<T>& feat, int s);

/// While on, relu and l1_loss fold the sign pattern of their inputs into a
/// per-thread hash. Finite-difference probes compare hashes to detect that
/// they straddled a kink.
void set_kink_tracking(bool on);
/// Returns the hash accumulated since the last call and resets it.
std::uint64_t take_kink_signature();

}  // namespace ciaosr
