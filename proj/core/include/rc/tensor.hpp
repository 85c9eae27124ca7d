#pragma once

// Minimal reverse-mode autograd over dense float tensors. Only the kernels
// needed by the residual-compressor and Q-classifier networks are provided.
// The scalar type is a template parameter: float is used for training and
// inference, double only by the gradient-check tests.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace rc {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative tensor extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until backward touches this node
  bool requires_grad = false;
  // Parents in the compute graph plus the function that routes this node's
  // grad into the parents' grads (accumulating additively).
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  bool in_graph() const { return requires_grad || backward_fn; }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

// Value-semantics handle onto a shared graph node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<TensorNode<T>>()) {
    node_->shape = std::move(shape);
    node_->data.assign(shape_numel(node_->shape), T(0));
    node_->requires_grad = requires_grad;
  }

  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    if (values.size() != t.size())
      throw std::invalid_argument("tensor data size mismatch");
    t.node_->data = std::move(values);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    Tensor t(Shape{1}, requires_grad);
    t.data()[0] = v;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(i); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->data.size(); }

  T* data() { return node_->data.data(); }
  const T* data() const { return node_->data.data(); }
  std::vector<T>& vec() { return node_->data; }
  const std::vector<T>& vec() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  bool finite() const {
    for (T v : node_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  std::shared_ptr<TensorNode<T>>& node() { return node_; }
  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Every tensor reachable
// from `loss` with requires_grad set ends up with grad = d loss / d tensor.
template <typename T>
void backward(Tensor<T>& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward() expects a scalar loss");

  // Topological order via DFS.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::function<void(TensorNode<T>*)> visit = [&](TensorNode<T>* n) {
    if (seen.count(n)) return;
    seen.insert(n);
    for (auto& p : n->parents) visit(p.get());
    order.push_back(n);
  };
  visit(loss.node().get());

  for (auto* n : order) n->ensure_grad();
  loss.node()->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// When grad mode is off, ops skip graph construction entirely (inference).
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev_; }

 private:
  bool prev_;
};

template <typename T>
bool graph_wanted(const Tensor<T>& a) {
  return grad_mode_flag() && a.node()->in_graph();
}

}  // namespace rc
