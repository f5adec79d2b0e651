#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Graph records every primitive eagerly: building a node computes its
// forward value immediately and stores a closure that propagates the node's
// gradient to its parents. Node ids increase in creation order, which is a
// topological order, so backward() is a single reverse sweep.

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vqrank/rng.hpp"
#include "vqrank/tensor.hpp"

namespace vqr {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return graph->value(*this).shape(); }
};

template <typename T>
using GradientMap = std::unordered_map<std::size_t, Tensor<T>>;

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  const char* op(Var<T> v) const { return nodes_.at(v.id).op; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulated at `v` by the last backward(); zeros if none reached it.
  Tensor<T> grad(Var<T> v) const;

  /// Seeds d(root)/d(root) = 1 and sweeps the graph in reverse creation order.
  /// Returns the gradient of every leaf created with requires_grad.
  GradientMap<T> backward(Var<T> root);

  // Primitive construction interface.
  Var<T> record(const char* op, Tensor<T> value, std::vector<std::size_t> parents, BackwardFn fn);
  Tensor<T>& grad_buffer(std::size_t id);
  const Tensor<T>& value_at(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

 private:
  struct Node {
    const char* op = "leaf";
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

/// Cached forward value of a node.
template <typename T>
const Tensor<T>& forward(Var<T> root) {
  return root.value();
}

// Primitives. Binary elementwise ops accept equal shapes, a scalar {1}
// operand, or a rank-1 operand matching the other's last extent (row broadcast).
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
/// Matrix product; rank-1 operands are promoted to a row (lhs) or column (rhs).
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
/// Mean over `axis`; the axis is removed (a full reduction yields shape {1}).
template <typename T> Var<T> mean(Var<T> x, std::size_t axis);
template <typename T> Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
template <typename T> Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T> Var<T> transpose(Var<T> x);
template <typename T> Var<T> reshape(Var<T> x, Shape shape);
template <typename T> Var<T> relu(Var<T> x);
template <typename T> Var<T> sigmoid(Var<T> x);
/// Softmax over the last axis.
template <typename T> Var<T> softmax(Var<T> x);
/// Normalizes each last-axis row to zero mean and unit variance (eps 1e-5), no affine.
template <typename T> Var<T> layer_norm(Var<T> x);
/// Scales each last-axis row to unit Euclidean norm.
template <typename T> Var<T> l2_normalize(Var<T> x);
/// Inverted dropout. Identity unless `train` is set and p > 0.
template <typename T> Var<T> dropout(Var<T> x, double p, bool train, Rng& rng);

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts, std::size_t axis) {
  return concat<T>(std::span<const Var<T>>(parts.begin(), parts.size()), axis);
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  return concat<T>(std::span<const Var<T>>(parts), axis);
}

template <typename T>
Var<T> scale(Var<T> x, T c) {
  return mul(x, x.graph->constant(Tensor<T>::scalar(c)));
}

/// Sum over `axis`, composed as mean times extent.
template <typename T>
Var<T> sum(Var<T> x, std::size_t axis) {
  const std::size_t n = x.shape().at(axis);
  return scale(mean(x, axis), static_cast<T>(n));
}

/// Dot product of two rank-1 vectors, shape {1}.
template <typename T>
Var<T> dot(Var<T> a, Var<T> b) {
  return matmul(a, b);
}

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return mul(a, b); }

using GraphBuilder = std::function<Var<double>(Graph<double>&, Var<double>)>;
using MultiGraphBuilder = std::function<Var<double>(Graph<double>&, std::span<const Var<double>>)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Throws NumericError if any evaluation is non-finite.
double gradient_check(const GraphBuilder& fn, const Tensor<double>& point, double step);

/// Same check over several inputs at once; every input is perturbed.
double gradient_check(const MultiGraphBuilder& fn, const std::vector<Tensor<double>>& points,
                      double step);

}  // namespace vqr
