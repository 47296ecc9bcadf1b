#pragma once

// Dense f64 tensors with eager evaluation and a recorded graph for
// reverse-mode differentiation.
//
// Broadcasting rules for the binary elementwise ops (add, sub, mul):
//   * identical shapes;
//   * one operand holds a single element (scalar broadcast);
//   * lhs is [n, c] and rhs is [c] or [1, c] (row broadcast over n).
// Anything else raises ShapeError naming the op and both shapes.
//
// A graph is consumed by backward(): intermediate nodes drop their closures
// and parents, and a second backward() through any of them raises Error.
// Leaf gradients accumulate across separate graphs until zero_grad().

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dsample/error.hpp"

namespace dsample::ad {

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buf() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               const std::vector<Tensor>& inputs, BackwardFn fn);
const NodePtr& node_of(const Tensor& t);

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) { detail::grad_enabled() = false; }
  ~NoGradGuard() { detail::grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (detail::numel(shape) != data.size()) {
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(data.size()) + " values");
    }
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const auto count = detail::numel(shape);
    return from_data(std::move(shape), std::vector<double>(count, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }

  /// Writable view of a leaf's storage (parameter updates, test perturbation).
  std::span<double> mutable_values() {
    if (!node_->leaf) throw Error("mutable_values: tensor is not a leaf");
    return node_->value;
  }

  double item() const {
    if (numel() != 1) throw ShapeError("item: tensor has shape " + shape_str(shape()));
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t i, std::size_t j) const { return node_->value[i * dim(1) + j]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    if (!node_->leaf) throw Error("set_requires_grad: tensor is not a leaf");
    node_->requires_grad = on;
  }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Leaf copy of the current values, disconnected from any graph.
  Tensor detach() const { return from_data(shape(), node_->value, false); }

  void backward() const;

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

  detail::NodePtr node_;

  friend Tensor detail::make_op(const char*, Shape, std::vector<double>, const std::vector<Tensor>&,
                                detail::BackwardFn);
  friend const detail::NodePtr& detail::node_of(const Tensor&);
};

namespace detail {

inline const NodePtr& node_of(const Tensor& t) { return t.node_; }

inline Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                      const std::vector<Tensor>& inputs, BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  n->leaf = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(node_of(in));
    n->backward_fn = std::move(fn);
  }
  return Tensor(std::move(n));
}

/// Gradient sink of parent `i`, or nullptr when it does not need one.
inline double* sink(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad_buf().data() : nullptr;
}

inline const std::vector<double>& in_value(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

}  // namespace detail

inline void Tensor::backward() const {
  if (!defined()) throw Error("backward: undefined tensor");
  if (numel() != 1) throw Error("backward: root must be scalar, got shape " + shape_str(shape()));
  if (!node_->requires_grad) throw Error("backward: root does not require grad");
  if (node_->consumed) throw Error("backward: graph already consumed");

  // Iterative post-order DFS gives parents before consumers.
  std::vector<detail::Node*> order;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  std::unordered_set<detail::Node*> seen{node_.get()};
  stack.emplace_back(node_.get(), 0);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.contains(p)) {
        if (p->consumed) throw Error("backward: graph already consumed");
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (auto* n : order)
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  node_->grad_buf()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
  for (auto* n : order) {
    if (n->leaf) continue;
    n->consumed = true;
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <class F, class DF>
Tensor unary(const char* op, const Tensor& a, F f, DF df) {
  const auto& x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_op(op, a.shape(), std::move(y), {a}, [df](Node& self) {
    double* gx = sink(self, 0);
    if (!gx) return;
    const auto& x = in_value(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += self.grad[i] * df(x[i], self.value[i]);
  });
}

struct Broadcast {
  Shape out;
  int a_mode = 0;  // 0: elementwise, 1: scalar, 2: row of width `cols`
  int b_mode = 0;
  std::size_t cols = 1;

  std::size_t ia(std::size_t i) const { return a_mode == 0 ? i : (a_mode == 1 ? 0 : i % cols); }
  std::size_t ib(std::size_t i) const { return b_mode == 0 ? i : (b_mode == 1 ? 0 : i % cols); }
};

inline Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  const auto na = numel(a), nb = numel(b);
  if (a == b) {
    bc.out = a;
  } else if (nb == 1) {
    bc.out = a;
    bc.b_mode = 1;
  } else if (na == 1) {
    bc.out = b;
    bc.a_mode = 1;
  } else if (a.size() == 2 && ((b.size() == 1 && b[0] == a[1]) ||
                               (b.size() == 2 && b[0] == 1 && b[1] == a[1]))) {
    bc.out = a;
    bc.b_mode = 2;
    bc.cols = a[1];
  } else {
    throw_shape(op, a, b);
  }
  return bc;
}

template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Broadcast bc = broadcast(op, a.shape(), b.shape());
  const auto& x = a.values();
  const auto& y = b.values();
  std::vector<double> out(numel(bc.out));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[bc.ia(i)], y[bc.ib(i)]);
  return make_op(op, bc.out, std::move(out), {a, b}, [bc, da, db](Node& self) {
    const auto& x = in_value(self, 0);
    const auto& y = in_value(self, 1);
    double* gx = sink(self, 0);
    double* gy = sink(self, 1);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double xa = x[bc.ia(i)], yb = y[bc.ib(i)], g = self.grad[i];
      if (gx) gx[bc.ia(i)] += g * da(xa, yb);
      if (gy) gy[bc.ib(i)] += g * db(xa, yb);
    }
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor neg(const Tensor& a) {
  return detail::unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor scale(const Tensor& a, double c) {
  return detail::unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  return detail::unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

/// max(x, lo); the gradient is blocked only where x < lo.
inline Tensor clamp_min(const Tensor& a, double lo) {
  return detail::unary(
      "clamp_min", a, [lo](double x) { return x < lo ? lo : x; },
      [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  const auto& x = a.values();
  double s = 0.0;
  for (double v : x) s += v;
  return detail::make_op("sum", {}, {s}, {a}, [](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    const double g = self.grad[0];
    for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) gx[i] += g;
  });
}

inline Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw_shape("mean", a.shape());
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

/// Sum of a rank-2 tensor over `axis` (0 collapses rows, 1 collapses columns).
inline Tensor sum_axis(const Tensor& a, std::size_t axis) {
  if (a.rank() != 2 || axis > 1) throw_shape("sum_axis", a.shape());
  const std::size_t n = a.dim(0), c = a.dim(1);
  const auto& x = a.values();
  std::vector<double> out(axis == 0 ? c : n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += x[i * c + j];
  Shape s{axis == 0 ? c : n};
  return detail::make_op("sum_axis", std::move(s), std::move(out), {a},
                         [n, c, axis](detail::Node& self) {
                           double* gx = detail::sink(self, 0);
                           if (!gx) return;
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               gx[i * c + j] += self.grad[axis == 0 ? j : i];
                         });
}

namespace detail {

template <class Better>
Tensor extreme_over_axis(const char* op, const Tensor& a, std::size_t axis, Better better) {
  std::size_t n, c;
  if (a.rank() == 1 && axis == 0) {
    n = a.dim(0);
    c = 1;
  } else if (a.rank() == 2 && axis <= 1) {
    n = a.dim(0);
    c = a.dim(1);
  } else {
    throw_shape(op, a.shape());
  }
  if (n == 0 || c == 0) throw_shape(op, a.shape());
  const auto& x = a.values();
  const bool over_rows = axis == 0;
  const std::size_t outer = over_rows ? c : n;
  const std::size_t inner = over_rows ? n : c;
  std::vector<double> out(outer);
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t best = over_rows ? o : o * c;
    for (std::size_t r = 1; r < inner; ++r) {
      const std::size_t idx = over_rows ? r * c + o : o * c + r;
      // Strict comparison keeps the lowest index on ties.
      if (better(x[idx], x[best])) best = idx;
    }
    out[o] = x[best];
    arg[o] = best;
  }
  Shape s;
  if (a.rank() == 2) s = {outer};
  return make_op(op, std::move(s), std::move(out), {a}, [arg = std::move(arg)](Node& self) {
    double* gx = sink(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += self.grad[o];
  });
}

}  // namespace detail

/// Maximum over `axis`; the gradient flows to the first maximizing element.
inline Tensor max_over_axis(const Tensor& a, std::size_t axis) {
  return detail::extreme_over_axis("max_over_axis", a, axis,
                                   [](double v, double best) { return v > best; });
}

inline Tensor min_over_axis(const Tensor& a, std::size_t axis) {
  return detail::extreme_over_axis("min_over_axis", a, axis,
                                   [](double v, double best) { return v < best; });
}

// ---------------------------------------------------------------------------
// Linear algebra and structure

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

}  // namespace detail

/// Matrix product. Rank-1 operands act as a row (lhs) or column (rhs) vector
/// and the corresponding output axis is dropped.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) throw_shape("matmul", a.shape(), b.shape());
  const std::size_t n = a.rank() == 2 ? a.dim(0) : 1;
  const std::size_t k = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const std::size_t kb = b.dim(0);
  const std::size_t m = b.rank() == 2 ? b.dim(1) : 1;
  if (k != kb) throw_shape("matmul", a.shape(), b.shape());
  Shape s;
  if (a.rank() == 2) s.push_back(n);
  if (b.rank() == 2) s.push_back(m);
  std::vector<double> out(n * m);
  {
    detail::ConstMap A(a.values().data(), n, k);
    detail::ConstMap B(b.values().data(), k, m);
    detail::MutMap C(out.data(), n, m);
    C.noalias() = A * B;
  }
  return detail::make_op("matmul", std::move(s), std::move(out), {a, b}, [n, k, m](detail::Node& self) {
    detail::ConstMap G(self.grad.data(), n, m);
    if (double* ga = detail::sink(self, 0)) {
      detail::ConstMap B(detail::in_value(self, 1).data(), k, m);
      detail::MutMap GA(ga, n, k);
      GA.noalias() += G * B.transpose();
    }
    if (double* gb = detail::sink(self, 1)) {
      detail::ConstMap A(detail::in_value(self, 0).data(), n, k);
      detail::MutMap GB(gb, k, m);
      GB.noalias() += A.transpose() * G;
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw_shape("transpose", a.shape());
  const std::size_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(n * m);
  const auto& x = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = x[i * m + j];
  return detail::make_op("transpose", {m, n}, std::move(out), {a}, [n, m](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += self.grad[j * n + i];
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (detail::numel(shape) != a.numel()) throw_shape("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  return detail::make_op("reshape", std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

/// Rows `idx` of a rank-2 tensor (or elements of a rank-1 tensor).
/// Repeated indices are allowed; their gradients add up.
inline Tensor gather(const Tensor& a, std::vector<std::size_t> idx) {
  if (a.rank() < 1 || a.rank() > 2) throw_shape("gather", a.shape());
  const std::size_t n = a.dim(0);
  const std::size_t c = a.rank() == 2 ? a.dim(1) : 1;
  for (auto i : idx)
    if (i >= n) throw ShapeError("op 'gather': index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  std::vector<double> out(idx.size() * c);
  const auto& x = a.values();
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(idx[r] * c), c, out.begin() + static_cast<std::ptrdiff_t>(r * c));
  Shape s{idx.size()};
  if (a.rank() == 2) s.push_back(c);
  return detail::make_op("gather", std::move(s), std::move(out), {a}, [idx = std::move(idx), c](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) gx[idx[r] * c + j] += self.grad[r * c + j];
  });
}

/// Elements at flat (row-major) positions, as a rank-1 tensor.
inline Tensor take(const Tensor& a, std::vector<std::size_t> flat) {
  return gather(reshape(a, {a.numel()}), std::move(flat));
}

/// Rows [begin, begin + count) of a rank-2 tensor.
inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (a.rank() != 2 || begin + count > a.dim(0)) throw_shape("slice_rows", a.shape());
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), begin);
  return gather(a, std::move(idx));
}

/// Concatenation along axis 0 (rank 1 or 2) or axis 1 (rank 2).
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("op 'concat': no inputs");
  const std::size_t rank = parts[0].rank();
  if (rank < 1 || rank > 2 || axis >= rank) throw_shape("concat", parts[0].shape());
  const std::size_t rows = parts[0].dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw_shape("concat", parts[0].shape(), p.shape());
    if (rank == 2 && axis == 0 && p.dim(1) != parts[0].dim(1)) throw_shape("concat", parts[0].shape(), p.shape());
    if (rank == 2 && axis == 1 && p.dim(0) != rows) throw_shape("concat", parts[0].shape(), p.shape());
    total += p.dim(axis);
  }
  Shape s = parts[0].shape();
  s[axis] = total;
  std::vector<double> out;
  out.reserve(detail::numel(s));
  std::vector<std::size_t> widths;
  if (axis == 0) {
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  } else {
    for (const auto& p : parts) widths.push_back(p.dim(1));
    for (std::size_t i = 0; i < rows; ++i)
      for (const auto& p : parts) {
        const auto w = p.dim(1);
        out.insert(out.end(), p.values().begin() + static_cast<std::ptrdiff_t>(i * w),
                   p.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
      }
  }
  return detail::make_op("concat", s, std::move(out), parts,
                         [axis, rows, total, widths = std::move(widths)](detail::Node& self) {
                           if (axis == 0) {
                             std::size_t off = 0;
                             for (std::size_t p = 0; p < self.parents.size(); ++p) {
                               const auto cnt = self.parents[p]->value.size();
                               if (double* g = detail::sink(self, p))
                                 for (std::size_t i = 0; i < cnt; ++i) g[i] += self.grad[off + i];
                               off += cnt;
                             }
                             return;
                           }
                           std::size_t col = 0;
                           for (std::size_t p = 0; p < self.parents.size(); ++p) {
                             const auto w = widths[p];
                             if (double* g = detail::sink(self, p))
                               for (std::size_t i = 0; i < rows; ++i)
                                 for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * total + col + j];
                             col += w;
                           }
                         });
}

/// Per-channel scale and shift of a [n, c] tensor: y = x * scale + shift.
/// Stands in for batch normalization without running statistics.
inline Tensor affine_channels(const Tensor& x, const Tensor& scale_c, const Tensor& shift_c) {
  if (x.rank() != 2 || scale_c.rank() != 1 || shift_c.rank() != 1 || scale_c.dim(0) != x.dim(1) ||
      shift_c.dim(0) != x.dim(1))
    throw_shape("affine_channels", x.shape(), scale_c.shape());
  const std::size_t n = x.dim(0), c = x.dim(1);
  const auto& xv = x.values();
  const auto& sv = scale_c.values();
  const auto& hv = shift_c.values();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] * sv[j] + hv[j];
  return detail::make_op("affine_channels", {n, c}, std::move(out), {x, scale_c, shift_c},
                         [n, c](detail::Node& self) {
                           const auto& xv = detail::in_value(self, 0);
                           const auto& sv = detail::in_value(self, 1);
                           double* gx = detail::sink(self, 0);
                           double* gs = detail::sink(self, 1);
                           double* gh = detail::sink(self, 2);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < c; ++j) {
                               const double g = self.grad[i * c + j];
                               if (gx) gx[i * c + j] += g * sv[j];
                               if (gs) gs[j] += g * xv[i * c + j];
                               if (gh) gh[j] += g;
                             }
                         });
}

// ---------------------------------------------------------------------------
// Softmax family

/// Softmax along the last axis of a rank-1 or rank-2 tensor.
inline Tensor softmax(const Tensor& a) {
  if (a.rank() < 1 || a.rank() > 2 || a.numel() == 0) throw_shape("softmax", a.shape());
  const std::size_t c = a.shape().back();
  const std::size_t rows = a.numel() / c;
  const auto& x = a.values();
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * c;
    double* yr = y.data() + r * c;
    const double mx = *std::max_element(xr, xr + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < c; ++j) yr[j] /= z;
  }
  return detail::make_op("softmax", a.shape(), std::move(y), {a}, [rows, c](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = self.value.data() + r * c;
      const double* gr = self.grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += yr[j] * (gr[j] - dot);
    }
  });
}

/// Row-wise softmax of -sq / t^2 for squared distances sq [m, k] and a
/// single-element temperature t. Each row is stabilized by its maximum.
inline Tensor softmax_neg_sq_dist(const Tensor& sq, const Tensor& t) {
  if (sq.rank() != 2 || t.numel() != 1) throw_shape("softmax_neg_sq_dist", sq.shape(), t.shape());
  const double tv = t.values()[0];
  if (!(tv > 0.0)) throw Error("softmax_neg_sq_dist: temperature must be positive, got " + std::to_string(tv));
  const std::size_t m = sq.dim(0), k = sq.dim(1);
  const auto& d = sq.values();
  const double inv_t2 = 1.0 / (tv * tv);
  std::vector<double> w(m * k);
  for (std::size_t r = 0; r < m; ++r) {
    const double* dr = d.data() + r * k;
    double* wr = w.data() + r * k;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, -dr[j] * inv_t2);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += (wr[j] = std::exp(-dr[j] * inv_t2 - mx));
    for (std::size_t j = 0; j < k; ++j) wr[j] /= z;
  }
  return detail::make_op("softmax_neg_sq_dist", {m, k}, std::move(w), {sq, t}, [m, k](detail::Node& self) {
    const auto& d = detail::in_value(self, 0);
    const double tv = detail::in_value(self, 1)[0];
    const double inv_t2 = 1.0 / (tv * tv);
    double* gd = detail::sink(self, 0);
    double* gt = detail::sink(self, 1);
    for (std::size_t r = 0; r < m; ++r) {
      const double* wr = self.value.data() + r * k;
      const double* gr = self.grad.data() + r * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += gr[j] * wr[j];
      for (std::size_t j = 0; j < k; ++j) {
        const double gz = wr[j] * (gr[j] - dot);  // d/dz of z = -d/t^2
        if (gd) gd[r * k + j] += -gz * inv_t2;
        if (gt) gt[0] += gz * 2.0 * d[r * k + j] * inv_t2 / tv;
      }
    }
  });
}

/// Softmax cross-entropy of a logit vector ([c] or [1, c]) against `label`.
inline Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  const std::size_t c = logits.numel();
  if (logits.rank() == 0 || c == 0 || label >= c) throw_shape("cross_entropy", logits.shape());
  const auto& x = logits.values();
  const double mx = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  return detail::make_op("cross_entropy", {}, {lse - x[label]}, {logits}, [label, lse](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    const auto& x = detail::in_value(self, 0);
    const double g = self.grad[0];
    for (std::size_t j = 0; j < x.size(); ++j)
      gx[j] += g * (std::exp(x[j] - lse) - (j == label ? 1.0 : 0.0));
  });
}

// ---------------------------------------------------------------------------
// Geometry helpers

/// v / ||v|| for a rank-1 tensor.
inline Tensor normalize(const Tensor& v) {
  if (v.rank() != 1) throw_shape("normalize", v.shape());
  const auto& x = v.values();
  double nn = 0.0;
  for (double e : x) nn += e * e;
  const double norm = std::sqrt(nn);
  if (!(norm > 0.0)) throw Error("normalize: zero vector");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / norm;
  return detail::make_op("normalize", v.shape(), std::move(y), {v}, [norm](detail::Node& self) {
    double* gx = detail::sink(self, 0);
    if (!gx) return;
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.size(); ++i) dot += self.grad[i] * self.value[i];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      gx[i] += (self.grad[i] - self.value[i] * dot) / norm;
  });
}

/// Squared Euclidean distances between the rows of X [a, d] and Y [b, d].
inline Tensor pairwise_sq_dist(const Tensor& X, const Tensor& Y) {
  if (X.rank() != 2 || Y.rank() != 2 || X.dim(1) != Y.dim(1)) throw_shape("pairwise_sq_dist", X.shape(), Y.shape());
  const std::size_t a = X.dim(0), b = Y.dim(0), d = X.dim(1);
  const auto& x = X.values();
  const auto& y = Y.values();
  std::vector<double> out(a * b);
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x[i * d + c] - y[j * d + c];
        s += diff * diff;
      }
      out[i * b + j] = s;
    }
  return detail::make_op("pairwise_sq_dist", {a, b}, std::move(out), {X, Y}, [a, b, d](detail::Node& self) {
    const auto& x = detail::in_value(self, 0);
    const auto& y = detail::in_value(self, 1);
    double* gx = detail::sink(self, 0);
    double* gy = detail::sink(self, 1);
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j) {
        const double g = self.grad[i * b + j];
        if (g == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = 2.0 * g * (x[i * d + c] - y[j * d + c]);
          if (gx) gx[i * d + c] += diff;
          if (gy) gy[j * d + c] -= diff;
        }
      }
  });
}

}  // namespace dsample::ad
