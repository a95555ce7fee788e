#include "ciaosr/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace ciaosr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {
thread_local bool t_grad_enabled = true;
thread_local std::size_t t_backward_visits = 0;
#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif
}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void set_finite_checks(bool on) { g_finite_checks = on; }
bool finite_checks() { return g_finite_checks; }

std::size_t last_backward_visits() { return t_backward_visits; }

template <typename T>
Tensor<T>::Tensor() : node_(std::make_shared<TensorNode<T>>()) {
  node_->data.assign(1, T(0));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  node_->data.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<TensorNode<T>>()) {
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->data.assign(values.begin(), values.end());
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::size(std::size_t axis) const {
  if (axis >= dim()) throw ShapeError("tensor: axis out of range");
  return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor has " + std::to_string(numel()) + " elements");
  return node_->data[0];
}

namespace {
std::size_t flat_index(const Shape& shape, std::initializer_list<std::size_t> index) {
  if (index.size() != shape.size()) throw ShapeError("at(): rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape[axis]) throw ShapeError("at(): index out of range");
    flat = flat * shape[axis] + i;
    ++axis;
  }
  return flat;
}
}  // namespace

template <typename T>
T& Tensor<T>::at(std::initializer_list<std::size_t> index) {
  return node_->data[flat_index(node_->shape, index)];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  return node_->data[flat_index(node_->shape, index)];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw AutodiffError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out;
  out.node_->shape = node_->shape;
  out.node_->data = node_->data;
  return out;
}

template <typename T>
Tensor<T> Tensor<T>::from_node(NodePtr<T> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
Tape<T>& Tape<T>::current() {
  thread_local Tape<T> tape;
  return tape;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  auto& tape = Tape<T>::current();
  t_backward_visits = 0;
  if (loss.numel() != 1) {
    tape.clear();
    throw AutodiffError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  const auto& root = loss.node();
  if (!root->requires_grad) {
    tape.clear();
    throw AutodiffError("backward: loss is not connected to any tensor requiring grad");
  }
  if (!root->is_leaf) {
    bool found = false;
    for (const auto& e : tape.entries())
      if (e.output == root) found = true;
    if (!found) {
      tape.clear();
      throw AutodiffError("backward: loss was not produced on the current tape");
    }
  }
  root->grad_buffer()[0] += T(1);

  const auto& entries = tape.entries();
  std::unordered_set<const TensorNode<T>*> visited;
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not upstream of loss
    if (!visited.insert(it->output.get()).second)
      throw AutodiffError("backward: node visited twice (" + it->op + ")");
    it->backward();
    ++t_backward_visits;
  }
  tape.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace ciaosr
