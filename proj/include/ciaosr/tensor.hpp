#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ciaosr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-byte aligned storage. Vectorized kernels choose their loop peeling
/// from pointer alignment, so unaligned buffers would make rounding depend
/// on where the allocator happened to place them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct TensorNode {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;

  Buffer<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

/// Shared handle to a dense row-major array. Copies alias the same storage;
/// use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T* raw() { return node_->data.data(); }
  const T* raw() const { return node_->data.data(); }

  T item() const;
  T& at(std::initializer_list<std::size_t> index);
  T at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy without graph history.
  Tensor clone() const;
  /// Same values, detached from the tape, never requiring grad.
  Tensor detach() const { return clone(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const NodePtr<T>& node() const { return node_; }
  static Tensor from_node(NodePtr<T> node);

 private:
  NodePtr<T> node_;
};

template <typename T>
struct TapeEntry {
  std::string op;
  std::vector<NodePtr<T>> inputs;
  NodePtr<T> output;
  std::function<void()> backward;
};

/// Linear record of differentiable operations for one execution stream.
/// Entries are appended in creation order, which is a topological order.
template <typename T>
class Tape {
 public:
  static Tape& current();

  void record(TapeEntry<T> entry) { entries_.push_back(std::move(entry)); }
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<TapeEntry<T>>& entries() const { return entries_; }

 private:
  std::vector<TapeEntry<T>> entries_;
};

bool grad_enabled();

/// Disables recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When on, every op checks its output for NaN/Inf and throws NonFiniteError.
/// Defaults to on in debug builds.
void set_finite_checks(bool on);
bool finite_checks();

/// Accumulates d(loss)/d(x) into every requires_grad leaf reachable from
/// loss, then clears the tape.
template <typename T>
void backward(const Tensor<T>& loss);

/// Returns the number of backward rules executed by the last backward() on
/// this thread.
std::size_t last_backward_visits();

}  // namespace ciaosr
