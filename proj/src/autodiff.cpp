#include "vqrank/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vqr {

// ---------------------------------------------------------------- graph

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::record(const char* op, Tensor<T> value, std::vector<std::size_t> parents,
                        BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = std::any_of(parents.begin(), parents.end(),
                                   [&](std::size_t p) { return nodes_[p].requires_grad; });
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor<T>(node.value.shape(), T{0});
    node.has_grad = true;
  }
  return node.grad;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var<T> v) const {
  const Node& node = nodes_.at(v.id);
  if (node.has_grad) return node.grad;
  return Tensor<T>(node.value.shape(), T{0});
}

template <typename T>
GradientMap<T> Graph<T>::backward(Var<T> root) {
  if (root.graph != this) throw ContractViolation("backward: root belongs to another graph");
  if (nodes_.at(root.id).value.numel() != 1) {
    throw ContractViolation("backward: root must be scalar, got shape " +
                            shape_str(nodes_[root.id].value.shape()));
  }
  for (Node& node : nodes_) node.has_grad = false;
  grad_buffer(root.id)[0] = T{1};
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.requires_grad || node.is_leaf) continue;
    node.backward(*this, id);
  }
  GradientMap<T> out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (node.is_leaf && node.requires_grad) out.emplace(id, grad(Var<T>{this, id}));
  }
  return out;
}

namespace {

// ---------------------------------------------------------------- helpers

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

template <typename T>
void check_same_graph(Var<T> a, Var<T> b, const char* op) {
  if (a.graph != b.graph) throw ContractViolation(std::string(op) + ": operands from different graphs");
}

enum class Bcast { kFull, kScalar, kRow };

struct BinaryPlan {
  Shape out;
  Bcast a = Bcast::kFull;
  Bcast b = Bcast::kFull;
  std::size_t row = 1;
};

BinaryPlan plan_binary(const char* op, const Shape& a, const Shape& b) {
  BinaryPlan plan;
  const std::size_t na = shape_numel(a);
  const std::size_t nb = shape_numel(b);
  if (a == b) {
    plan.out = a;
  } else if (nb == 1 && b.size() == 1) {
    plan.out = a;
    plan.b = Bcast::kScalar;
  } else if (na == 1 && a.size() == 1) {
    plan.out = b;
    plan.a = Bcast::kScalar;
  } else if (b.size() == 1 && a.size() >= 2 && a.back() == b[0]) {
    plan.out = a;
    plan.b = Bcast::kRow;
    plan.row = b[0];
  } else if (a.size() == 1 && b.size() >= 2 && b.back() == a[0]) {
    plan.out = b;
    plan.a = Bcast::kRow;
    plan.row = a[0];
  } else {
    shape_error(op, a, b);
  }
  return plan;
}

inline std::size_t bcast_index(Bcast kind, std::size_t i, std::size_t row) {
  switch (kind) {
    case Bcast::kScalar:
      return 0;
    case Bcast::kRow:
      return i % row;
    case Bcast::kFull:
    default:
      return i;
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T, typename Fwd, typename Dfa, typename Dfb>
Var<T> binary(const char* op, Var<T> a, Var<T> b, Fwd fwd, Dfa dfa, Dfb dfb) {
  check_same_graph(a, b, op);
  Graph<T>& g = *a.graph;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const BinaryPlan plan = plan_binary(op, av.shape(), bv.shape());
  Tensor<T> out(plan.out);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = fwd(av[bcast_index(plan.a, i, plan.row)], bv[bcast_index(plan.b, i, plan.row)]);
  }
  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return g.record(op, std::move(out), {ia, ib}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    const Tensor<T>& x = gr.value_at(ia);
    const Tensor<T>& y = gr.value_at(ib);
    if (gr.needs_grad(ia)) {
      Tensor<T>& ga = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < gy.numel(); ++i) {
        const std::size_t ja = bcast_index(plan.a, i, plan.row);
        const std::size_t jb = bcast_index(plan.b, i, plan.row);
        ga[ja] += gy[i] * dfa(x[ja], y[jb]);
      }
    }
    if (gr.needs_grad(ib)) {
      Tensor<T>& gb = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < gy.numel(); ++i) {
        const std::size_t ja = bcast_index(plan.a, i, plan.row);
        const std::size_t jb = bcast_index(plan.b, i, plan.row);
        gb[jb] += gy[i] * dfb(x[ja], y[jb]);
      }
    }
  });
}

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const char* op, Var<T> x, Fwd fwd, Deriv deriv) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(xv[i]);
  const std::size_t ix = x.id;
  // deriv receives (input, output).
  return g.record(op, std::move(out), {ix}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    const Tensor<T>& in = gr.value_at(ix);
    const Tensor<T>& out_v = gr.value_at(self);
    Tensor<T>& gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * deriv(in[i], out_v[i]);
  });
}

// C[m,n] += A[m,k] * B[k,n], all row-major.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- primitives

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{1}; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{-1}; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_graph(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() > 2 || sb.size() > 2) shape_error("matmul", sa, sb);
  const std::size_t m = sa.size() == 2 ? sa[0] : 1;
  const std::size_t k = sa.back();
  const std::size_t kb = sb[0];
  const std::size_t n = sb.size() == 2 ? sb[1] : 1;
  if (k != kb) shape_error("matmul", sa, sb);

  Shape out_shape;
  if (sa.size() == 2) out_shape.push_back(m);
  if (sb.size() == 2) out_shape.push_back(n);
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor<T> out(out_shape);
  gemm_acc(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);

  const std::size_t ia = a.id;
  const std::size_t ib = b.id;
  return a.graph->record("matmul", std::move(out), {ia, ib}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);  // [m, n]
    const Tensor<T>& av = gr.value_at(ia);      // [m, k]
    const Tensor<T>& bv = gr.value_at(ib);      // [k, n]
    if (gr.needs_grad(ia)) {
      // dA[i,p] += sum_j gy[i,j] * B[p,j]
      Tensor<T>& ga = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T acc{0};
          for (std::size_t j = 0; j < n; ++j) acc += gy[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (gr.needs_grad(ib)) {
      // dB[p,j] += sum_i A[i,p] * gy[i,j]
      Tensor<T>& gb = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * gy[i * n + j];
        }
      }
    }
  });
}

template <typename T>
Var<T> mean(Var<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("mean: axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  const AxisSplit sp = split_axis(s, axis);
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out(out_shape);
  const Tensor<T>& xv = x.value();
  const T inv = T{1} / static_cast<T>(sp.extent);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t e = 0; e < sp.extent; ++e) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        out[o * sp.inner + in] += xv[(o * sp.extent + e) * sp.inner + in];
      }
    }
  }
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;

  const std::size_t ix = x.id;
  return x.graph->record("mean", std::move(out), {ix}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    Tensor<T>& gx = gr.grad_buffer(ix);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t e = 0; e < sp.extent; ++e) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
          gx[(o * sp.extent + e) * sp.inner + in] += gy[o * sp.inner + in] * inv;
        }
      }
    }
  });
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  for (const Var<T>& p : parts) {
    if (p.graph != parts[0].graph) throw ContractViolation("concat: operands from different graphs");
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) shape_error("concat", first, s);
    }
    out_shape[axis] += s[axis];
    ids.push_back(p.id);
    extents.push_back(s[axis]);
  }
  const AxisSplit sp = split_axis(out_shape, axis);
  Tensor<T> out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& pv = parts[k].value();
    const std::size_t block = extents[k] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pv.data().data() + o * block, block,
                  out.data().data() + o * sp.extent * sp.inner + offset * sp.inner);
    }
    offset += extents[k];
  }
  std::vector<std::size_t> parents = ids;
  return parts[0].graph->record(
      "concat", std::move(out), std::move(parents), [=](Graph<T>& gr, std::size_t self) {
        const Tensor<T>& gy = gr.grad_buffer(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const std::size_t block = extents[k] * sp.inner;
          if (gr.needs_grad(ids[k])) {
            Tensor<T>& gp = gr.grad_buffer(ids[k]);
            for (std::size_t o = 0; o < sp.outer; ++o) {
              const T* src = gy.data().data() + o * sp.extent * sp.inner + off * sp.inner;
              T* dst = gp.data().data() + o * block;
              for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
            }
          }
          off += extents[k];
        }
      });
}

template <typename T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin >= end || end > s[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " invalid for shape " + shape_str(s));
  }
  const AxisSplit sp = split_axis(s, axis);
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t block = (end - begin) * sp.inner;
  Tensor<T> out(out_shape);
  const Tensor<T>& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.data().data() + (o * sp.extent + begin) * sp.inner, block,
                out.data().data() + o * block);
  }
  const std::size_t ix = x.id;
  return x.graph->record("slice", std::move(out), {ix}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    Tensor<T>& gx = gr.grad_buffer(ix);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      T* dst = gx.data().data() + (o * sp.extent + begin) * sp.inner;
      const T* src = gy.data().data() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  const Shape& s = x.shape();
  if (s.size() != 2) throw DimensionError("transpose: expected rank 2, got shape " + shape_str(s));
  const std::size_t r = s[0];
  const std::size_t c = s[1];
  Tensor<T> out(Shape{c, r});
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  const std::size_t ix = x.id;
  return x.graph->record("transpose", std::move(out), {ix}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    Tensor<T>& gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape_numel(shape) != x.value().numel()) {
    shape_error("reshape", x.shape(), shape);
  }
  Tensor<T> out(shape, x.value().values());
  const std::size_t ix = x.id;
  return x.graph->record("reshape", std::move(out), {ix}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    Tensor<T>& gx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  return unary<T>(
      "relu", x, [](T v) { return v > T{0} ? v : T{0}; },
      [](T in, T) { return in > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return unary<T>(
      "sigmoid", x,
      [](T v) {
        if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
        const T e = std::exp(v);
        return e / (T{1} + e);
      },
      [](T, T out) { return out * (T{1} - out); });
}

template <typename T>
Var<T> softmax(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.numel() / cols;
  Tensor<T> out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * cols;
    T* o = out.data().data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T total{0};
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  const std::size_t ix = x.id;
  return x.graph->record("softmax", std::move(out), {ix}, [=](Graph<T>& gr, std::size_t self) {
    const Tensor<T>& gy = gr.grad_buffer(self);
    const Tensor<T>& y = gr.value_at(self);
    Tensor<T>& gx = gr.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      T inner{0};
      for (std::size_t c = 0; c < cols; ++c) inner += gy[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += y[r * cols + c] * (gy[r * cols + c] - inner);
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x) {
  const Tensor<T>& xv = x.value();
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.numel() / cols;
  Tensor<T> out(xv.shape());
  std::vector<T> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data().data() + r * cols;
    T mu{0};
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<T>(cols);
    T var{0};
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<T>(cols);
    inv_std[r] = T{1} / std::sqrt(var + static_cast<T>(kLayerNormEps));
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (in[c] - mu) * inv_std[r];
  }
  const std::size_t ix = x.id;
  return x.graph->record("layer_norm", std::move(out), {ix},
                         [=, inv_std = std::move(inv_std)](Graph<T>& gr, std::size_t self) {
                           const Tensor<T>& gy = gr.grad_buffer(self);
                           const Tensor<T>& y = gr.value_at(self);
                           Tensor<T>& gx = gr.grad_buffer(ix);
                           const T n = static_cast<T>(cols);
                           for (std::size_t r = 0; r < rows; ++r) {
                             T mean_g{0};
                             T mean_gy{0};
                             for (std::size_t c = 0; c < cols; ++c) {
                               mean_g += gy[r * cols + c];
                               mean_gy += gy[r * cols + c] * y[r * cols + c];
                             }
                             mean_g /= n;
                             mean_gy /= n;
                             for (std::size_t c = 0; c < cols; ++c) {
                               gx[r * cols + c] += inv_std[r] * (gy[r * cols + c] - mean_g -
                                                                 y[r * cols + c] * mean_gy);
                             }
                           }
                         });
}

template <typename T>
Var<T> l2_normalize(Var<T> x) {
  constexpr T kEps = static_cast<T>(1e-12);
  const Tensor<T>& xv = x.value();
  const std::size_t cols = xv.shape().back();
  const std::size_t rows = xv.numel() / cols;
  Tensor<T> out(xv.shape());
  std::vector<T> inv_norm(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T ss{0};
    for (std::size_t c = 0; c < cols; ++c) ss += xv[r * cols + c] * xv[r * cols + c];
    inv_norm[r] = T{1} / std::sqrt(ss + kEps);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xv[r * cols + c] * inv_norm[r];
  }
  const std::size_t ix = x.id;
  return x.graph->record("l2_normalize", std::move(out), {ix},
                         [=, inv_norm = std::move(inv_norm)](Graph<T>& gr, std::size_t self) {
                           const Tensor<T>& gy = gr.grad_buffer(self);
                           const Tensor<T>& y = gr.value_at(self);
                           Tensor<T>& gx = gr.grad_buffer(ix);
                           for (std::size_t r = 0; r < rows; ++r) {
                             T proj{0};
                             for (std::size_t c = 0; c < cols; ++c) {
                               proj += gy[r * cols + c] * y[r * cols + c];
                             }
                             for (std::size_t c = 0; c < cols; ++c) {
                               gx[r * cols + c] +=
                                   inv_norm[r] * (gy[r * cols + c] - y[r * cols + c] * proj);
                             }
                           }
                         });
}

template <typename T>
Var<T> dropout(Var<T> x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  const Tensor<T>& xv = x.value();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> mask(xv.shape());
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    mask[i] = rng.uniform() < p ? T{0} : keep_scale;
    out[i] = xv[i] * mask[i];
  }
  const std::size_t ix = x.id;
  return x.graph->record("dropout", std::move(out), {ix},
                         [ix, mask = std::move(mask)](Graph<T>& gr, std::size_t self) {
                           const Tensor<T>& gy = gr.grad_buffer(self);
                           Tensor<T>& gx = gr.grad_buffer(ix);
                           for (std::size_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i] * mask[i];
                         });
}

// ---------------------------------------------------------------- gradient check

double gradient_check(const MultiGraphBuilder& fn, const std::vector<Tensor<double>>& points,
                      double step) {
  if (!(step > 0.0)) throw ContractViolation("gradient_check: step must be positive");

  auto evaluate = [&](const std::vector<Tensor<double>>& at) {
    Graph<double> g;
    std::vector<Var<double>> inputs;
    for (const auto& p : at) inputs.push_back(g.leaf(p));
    const Var<double> root = fn(g, inputs);
    const Tensor<double>& v = root.value();
    if (v.numel() != 1) throw ContractViolation("gradient_check: builder must return a scalar");
    if (!std::isfinite(v[0])) throw NumericError("gradient_check: non-finite function value");
    return v[0];
  };

  Graph<double> g;
  std::vector<Var<double>> inputs;
  for (const auto& p : points) inputs.push_back(g.leaf(p));
  const Var<double> root = fn(g, inputs);
  for (std::size_t id = 0; id < g.size(); ++id) {
    if (!g.value(Var<double>{&g, id}).all_finite()) {
      throw NumericError(std::string("gradient_check: non-finite intermediate at ") +
                         g.op(Var<double>{&g, id}));
    }
  }
  g.backward(root);

  double worst = 0.0;
  std::vector<Tensor<double>> probe = points;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Tensor<double> analytic = g.grad(inputs[k]);
    for (std::size_t i = 0; i < points[k].numel(); ++i) {
      probe[k][i] = points[k][i] + step;
      const double up = evaluate(probe);
      probe[k][i] = points[k][i] - step;
      const double down = evaluate(probe);
      probe[k][i] = points[k][i];
      const double numeric = (up - down) / (2.0 * step);
      const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double gradient_check(const GraphBuilder& fn, const Tensor<double>& point, double step) {
  return gradient_check(
      [&](Graph<double>& g, std::span<const Var<double>> in) { return fn(g, in[0]); },
      std::vector<Tensor<double>>{point}, step);
}

// ---------------------------------------------------------------- instantiations

#define VQR_INSTANTIATE(T)                                                          \
  template class Graph<T>;                                                          \
  template Var<T> add<T>(Var<T>, Var<T>);                                           \
  template Var<T> sub<T>(Var<T>, Var<T>);                                           \
  template Var<T> mul<T>(Var<T>, Var<T>);                                           \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                        \
  template Var<T> mean<T>(Var<T>, std::size_t);                                     \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                  \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t, std::size_t);          \
  template Var<T> transpose<T>(Var<T>);                                             \
  template Var<T> reshape<T>(Var<T>, Shape);                                        \
  template Var<T> relu<T>(Var<T>);                                                  \
  template Var<T> sigmoid<T>(Var<T>);                                               \
  template Var<T> softmax<T>(Var<T>);                                               \
  template Var<T> layer_norm<T>(Var<T>);                                            \
  template Var<T> l2_normalize<T>(Var<T>);                                          \
  template Var<T> dropout<T>(Var<T>, double, bool, Rng&);

VQR_INSTANTIATE(float)
VQR_INSTANTIATE(double)

#undef VQR_INSTANTIATE

}  // namespace vqr
