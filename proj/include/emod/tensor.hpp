// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major n-d arrays.
// Forward evaluation is eager; every operation records a graph node so that
// backward() can replay the chain rule in reverse topological order. The
// scalar type is a template parameter: float for training, double for
// gradient checking.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "emod/errors.hpp"
#include "emod/rng.hpp"

namespace emod {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using MatrixR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<MatrixR<S>>;
template <typename S>
using MatCMap = Eigen::Map<const MatrixR<S>>;

inline Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

// Row-major strides; broadcast axes get stride 0 in BroadcastPlan.
inline std::vector<Index> row_major_strides(const Shape& s) {
  std::vector<Index> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

struct BroadcastPlan {
  Shape out;
  std::vector<Index> sa, sb;  // strides into a and b aligned with out
  bool same = false;          // identical shapes, fast path
};

inline BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  p.out.assign(r, 1);
  for (int i = 0; i < r; ++i) {
    const Index da = i < r - ra ? 1 : a[i - (r - ra)];
    const Index db = i < r - rb ? 1 : b[i - (r - rb)];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    p.out[i] = std::max(da, db);
  }
  auto strides_for = [&](const Shape& s) {
    std::vector<Index> st(r, 0);
    const auto own = row_major_strides(s);
    const int off = r - static_cast<int>(s.size());
    for (int i = 0; i < static_cast<int>(s.size()); ++i)
      st[off + i] = (s[i] == 1 && p.out[off + i] != 1) ? 0 : own[i];
    return st;
  };
  p.sa = strides_for(a);
  p.sb = strides_for(b);
  return p;
}

// Calls f(out_index, a_index, b_index) for every element of the broadcast
// output, in row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const int r = static_cast<int>(p.out.size());
  const Index n = shape_numel(p.out);
  if (r == 0) {
    if (n == 1) f(Index(0), Index(0), Index(0));
    return;
  }
  std::vector<Index> coord(r, 0);
  Index ia = 0, ib = 0;
  for (Index o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (int ax = r - 1; ax >= 0; --ax) {
      ++coord[ax];
      ia += p.sa[ax];
      ib += p.sb[ax];
      if (coord[ax] < p.out[ax]) break;
      coord[ax] = 0;
      ia -= p.sa[ax] * p.out[ax];
      ib -= p.sb[ax] * p.out[ax];
    }
  }
}

template <typename S>
struct Node {
  Shape shape;
  ArrayX<S> value;
  ArrayX<S> grad;  // empty until backward touches this node
  std::vector<std::shared_ptr<Node<S>>> parents;
  bool requires_grad = false;
  bool backward_done = false;

  Node() = default;
  Node(Shape sh, ArrayX<S> v) : shape(std::move(sh)), value(std::move(v)) {}
  virtual ~Node() = default;
  virtual void backprop() {}

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX<S>::Zero(value.size());
  }
  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

template <typename S>
class Tensor {
 public:
  using Node = detail::Node<S>;
  using NodePtr = std::shared_ptr<Node>;

  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor from_values(Shape shape, std::vector<S> values) {
    if (shape_numel(shape) != static_cast<Index>(values.size()))
      throw ShapeError("from_values: " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " elements");
    ArrayX<S> v = Eigen::Map<const ArrayX<S>>(values.data(), static_cast<Index>(values.size()));
    return Tensor(std::make_shared<Node>(std::move(shape), std::move(v)));
  }
  static Tensor from_array(Shape shape, ArrayX<S> values) {
    if (shape_numel(shape) != values.size())
      throw ShapeError("from_array: shape/data size mismatch");
    return Tensor(std::make_shared<Node>(std::move(shape), std::move(values)));
  }
  static Tensor zeros(Shape shape) {
    ArrayX<S> v = ArrayX<S>::Zero(shape_numel(shape));
    return Tensor(std::make_shared<Node>(std::move(shape), std::move(v)));
  }
  static Tensor constant(Shape shape, S value) {
    ArrayX<S> v = ArrayX<S>::Constant(shape_numel(shape), value);
    return Tensor(std::make_shared<Node>(std::move(shape), std::move(v)));
  }
  static Tensor ones(Shape shape) { return constant(std::move(shape), S(1)); }
  static Tensor scalar(S value) { return constant({1}, value); }
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    ArrayX<S> v(shape_numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.normal() * stddev);
    return Tensor(std::make_shared<Node>(std::move(shape), std::move(v)));
  }
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi) {
    ArrayX<S> v(shape_numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.uniform(lo, hi));
    return Tensor(std::make_shared<Node>(std::move(shape), std::move(v)));
  }

  bool defined() const { return node_ != nullptr; }
  const NodePtr& node() const { return node_; }

  const Shape& shape() const { return n().shape; }
  Index rank() const { return static_cast<Index>(n().shape.size()); }
  Index size() const { return n().value.size(); }
  Index dim(int i) const {
    const auto& s = n().shape;
    if (i < 0) i += static_cast<int>(s.size());
    return s[static_cast<std::size_t>(i)];
  }

  const ArrayX<S>& values() const { return n().value; }
  ArrayX<S>& values_mut() { return n().value; }

  S scalar_value() const {
    if (size() != 1) throw GraphError("scalar_value: tensor has " + std::to_string(size()) + " elements");
    return n().value[0];
  }
  Index flat_index(std::initializer_list<Index> idx) const {
    const auto& s = n().shape;
    if (idx.size() != s.size()) throw ShapeError("flat_index: rank mismatch");
    Index f = 0;
    auto it = idx.begin();
    for (std::size_t i = 0; i < s.size(); ++i, ++it) f = f * s[i] + *it;
    return f;
  }
  S at(std::initializer_list<Index> idx) const { return n().value[flat_index(idx)]; }

  bool requires_grad() const { return n().requires_grad; }
  Tensor& set_requires_grad(bool v) {
    if (!n().is_leaf()) throw GraphError("set_requires_grad: only valid on leaf tensors");
    n().requires_grad = v;
    return *this;
  }
  bool has_grad() const { return n().grad.size() == n().value.size() && n().value.size() > 0; }
  const ArrayX<S>& grad() const {
    if (!has_grad()) throw GraphError("grad: no gradient present; run backward first");
    return n().grad;
  }
  void zero_grad() {
    if (n().grad.size() > 0) n().grad.setZero();
  }

  // 2-d view helpers.
  MatCMap<S> matrix() const {
    if (rank() != 2) throw ShapeError("matrix: tensor is not rank 2");
    return MatCMap<S>(n().value.data(), dim(0), dim(1));
  }

 private:
  Node& n() const {
    if (!node_) throw GraphError("operation on empty tensor");
    return *node_;
  }
  NodePtr node_;
};

// ---------------------------------------------------------------------------
// op nodes
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
bool any_requires_grad(const std::vector<std::shared_ptr<Node<S>>>& parents) {
  for (const auto& p : parents)
    if (p->requires_grad) return true;
  return false;
}

template <typename S, typename NodeT, typename... Args>
Tensor<S> make_op(Shape shape, ArrayX<S> value, std::vector<std::shared_ptr<Node<S>>> parents,
                  Args&&... args) {
  auto node = std::make_shared<NodeT>(std::forward<Args>(args)...);
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->requires_grad = any_requires_grad<S>(node->parents);
  return Tensor<S>(node);
}

enum class BinaryKind { Add, Sub, Mul, Div };

template <typename S>
struct BinaryNode final : Node<S> {
  BinaryKind kind;
  BroadcastPlan plan;
  BinaryNode(BinaryKind k, BroadcastPlan p) : kind(k), plan(std::move(p)) {}

  void backprop() override {
    auto& a = *this->parents[0];
    auto& b = *this->parents[1];
    const bool ga = a.requires_grad, gb = b.requires_grad;
    if (ga) a.ensure_grad();
    if (gb) b.ensure_grad();
    const ArrayX<S>& g = this->grad;
    if (plan.same) {
      switch (kind) {
        case BinaryKind::Add:
          if (ga) a.grad += g;
          if (gb) b.grad += g;
          break;
        case BinaryKind::Sub:
          if (ga) a.grad += g;
          if (gb) b.grad -= g;
          break;
        case BinaryKind::Mul:
          if (ga) a.grad += g * b.value;
          if (gb) b.grad += g * a.value;
          break;
        case BinaryKind::Div:
          if (ga) a.grad += g / b.value;
          if (gb) b.grad -= g * a.value / (b.value * b.value);
          break;
      }
      return;
    }
    for_each_broadcast(plan, [&](Index o, Index ia, Index ib) {
      switch (kind) {
        case BinaryKind::Add:
          if (ga) a.grad[ia] += g[o];
          if (gb) b.grad[ib] += g[o];
          break;
        case BinaryKind::Sub:
          if (ga) a.grad[ia] += g[o];
          if (gb) b.grad[ib] -= g[o];
          break;
        case BinaryKind::Mul:
          if (ga) a.grad[ia] += g[o] * b.value[ib];
          if (gb) b.grad[ib] += g[o] * a.value[ia];
          break;
        case BinaryKind::Div: {
          const S bv = b.value[ib];
          if (ga) a.grad[ia] += g[o] / bv;
          if (gb) b.grad[ib] -= g[o] * a.value[ia] / (bv * bv);
          break;
        }
      }
    });
  }
};

enum class UnaryKind { Neg, Exp, Log, Sqrt, Gelu, MaxScalar, Scale, AddScalar };

template <typename S>
struct UnaryNode final : Node<S> {
  UnaryKind kind;
  S c = S(0);  // scalar operand for MaxScalar/Scale/AddScalar
  UnaryNode(UnaryKind k, S cc) : kind(k), c(cc) {}

  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    const ArrayX<S>& g = this->grad;
    switch (kind) {
      case UnaryKind::Neg:
        a.grad -= g;
        break;
      case UnaryKind::Exp:
        a.grad += g * this->value;
        break;
      case UnaryKind::Log:
        a.grad += g / a.value;
        break;
      case UnaryKind::Sqrt:
        a.grad += g * S(0.5) / this->value;
        break;
      case UnaryKind::Gelu:
        for (Index i = 0; i < g.size(); ++i) {
          const double x = static_cast<double>(a.value[i]);
          const double phi = 0.5 * std::erfc(-x * 0.7071067811865475244);
          const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
          a.grad[i] += g[i] * static_cast<S>(phi + x * pdf);
        }
        break;
      case UnaryKind::MaxScalar:
        a.grad += g * (a.value > c).template cast<S>();
        break;
      case UnaryKind::Scale:
        a.grad += g * c;
        break;
      case UnaryKind::AddScalar:
        a.grad += g;
        break;
    }
  }
};

template <typename S>
struct MatMulNode final : Node<S> {
  Index batch, rows, inner, cols;
  bool a_batched, b_batched;
  MatMulNode(Index n, Index r, Index k, Index c, bool ab, bool bb)
      : batch(n), rows(r), inner(k), cols(c), a_batched(ab), b_batched(bb) {}

  void backprop() override {
    auto& a = *this->parents[0];
    auto& b = *this->parents[1];
    const bool ga = a.requires_grad, gb = b.requires_grad;
    if (ga) a.ensure_grad();
    if (gb) b.ensure_grad();
    const Index pa = rows * inner, pb = inner * cols, pc = rows * cols;
    for (Index i = 0; i < batch; ++i) {
      MatCMap<S> A(a.value.data() + (a_batched ? i * pa : 0), rows, inner);
      MatCMap<S> B(b.value.data() + (b_batched ? i * pb : 0), inner, cols);
      MatCMap<S> G(this->grad.data() + i * pc, rows, cols);
      if (ga) MatMap<S>(a.grad.data() + (a_batched ? i * pa : 0), rows, inner) += G * B.transpose();
      if (gb) MatMap<S>(b.grad.data() + (b_batched ? i * pb : 0), inner, cols) += A.transpose() * G;
    }
  }
};

template <typename S>
struct SoftmaxNode final : Node<S> {
  Index outer, len, inner;
  SoftmaxNode(Index o, Index l, Index i) : outer(o), len(l), inner(i) {}

  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    const ArrayX<S>& y = this->value;
    const ArrayX<S>& g = this->grad;
    for (Index o = 0; o < outer; ++o)
      for (Index i = 0; i < inner; ++i) {
        const Index base = o * len * inner + i;
        S dot = S(0);
        for (Index k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (Index k = 0; k < len; ++k) {
          const Index f = base + k * inner;
          a.grad[f] += y[f] * (g[f] - dot);
        }
      }
  }
};

template <typename S>
struct ReduceNode final : Node<S> {
  Index outer, len, inner;
  bool mean;
  ReduceNode(Index o, Index l, Index i, bool m) : outer(o), len(l), inner(i), mean(m) {}

  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    const S w = mean ? S(1) / static_cast<S>(len) : S(1);
    for (Index o = 0; o < outer; ++o)
      for (Index i = 0; i < inner; ++i) {
        const S gv = this->grad[o * inner + i] * w;
        const Index base = o * len * inner + i;
        for (Index k = 0; k < len; ++k) a.grad[base + k * inner] += gv;
      }
  }
};

template <typename S>
struct ReduceAllNode final : Node<S> {
  bool mean;
  explicit ReduceAllNode(bool m) : mean(m) {}
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    const S w = mean ? S(1) / static_cast<S>(a.value.size()) : S(1);
    a.grad += this->grad[0] * w;
  }
};

template <typename S>
struct ReshapeNode final : Node<S> {
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    a.grad += this->grad;
  }
};

template <typename S>
struct Transpose2dNode final : Node<S> {
  Index rows, cols;  // of the output
  Transpose2dNode(Index r, Index c) : rows(r), cols(c) {}
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    MatMap<S>(a.grad.data(), cols, rows) += MatCMap<S>(this->grad.data(), rows, cols).transpose();
  }
};

template <typename S>
struct SwapAxes01Node final : Node<S> {
  Index d0, d1, inner;  // output dims: [d0, d1, inner]
  SwapAxes01Node(Index a, Index b, Index i) : d0(a), d1(b), inner(i) {}
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    for (Index i = 0; i < d0; ++i)
      for (Index j = 0; j < d1; ++j) {
        const Index src = (i * d1 + j) * inner;
        const Index dst = (j * d0 + i) * inner;
        for (Index k = 0; k < inner; ++k) a.grad[dst + k] += this->grad[src + k];
      }
  }
};

template <typename S>
struct SliceAxis0Node final : Node<S> {
  Index offset;  // flat offset into the parent
  explicit SliceAxis0Node(Index off) : offset(off) {}
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    a.grad.segment(offset, this->grad.size()) += this->grad;
  }
};

template <typename S>
struct SliceColsNode final : Node<S> {
  Index rows, cols, parent_cols, col0;
  SliceColsNode(Index r, Index c, Index pc, Index c0) : rows(r), cols(c), parent_cols(pc), col0(c0) {}
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    MatMap<S>(a.grad.data(), rows, parent_cols).middleCols(col0, cols) +=
        MatCMap<S>(this->grad.data(), rows, cols);
  }
};

template <typename S>
struct ConcatAxis0Node final : Node<S> {
  std::vector<Index> sizes;  // flat size per part
  explicit ConcatAxis0Node(std::vector<Index> s) : sizes(std::move(s)) {}
  void backprop() override {
    Index off = 0;
    for (std::size_t i = 0; i < this->parents.size(); ++i) {
      auto& p = *this->parents[i];
      if (p.requires_grad) {
        p.ensure_grad();
        p.grad += this->grad.segment(off, sizes[i]);
      }
      off += sizes[i];
    }
  }
};

template <typename S>
struct GatherRowsNode final : Node<S> {
  std::vector<Index> indices;
  Index row_len;
  GatherRowsNode(std::vector<Index> idx, Index rl) : indices(std::move(idx)), row_len(rl) {}
  void backprop() override {
    auto& a = *this->parents[0];
    if (!a.requires_grad) return;
    a.ensure_grad();
    for (std::size_t r = 0; r < indices.size(); ++r)
      a.grad.segment(indices[r] * row_len, row_len) +=
          this->grad.segment(static_cast<Index>(r) * row_len, row_len);
  }
};

template <typename S>
struct Conv2dNode final : Node<S> {
  Index cin, h, w, cout, kh, kw, sh, sw, oh, ow;
  Conv2dNode(Index ci, Index hh, Index ww, Index co, Index k1, Index k2, Index s1, Index s2,
             Index o1, Index o2)
      : cin(ci), h(hh), w(ww), cout(co), kh(k1), kw(k2), sh(s1), sw(s2), oh(o1), ow(o2) {}

  void backprop() override {
    auto& xn = *this->parents[0];
    auto& kn = *this->parents[1];
    const bool gx = xn.requires_grad, gk = kn.requires_grad;
    if (gx) xn.ensure_grad();
    if (gk) kn.ensure_grad();
    const S* x = xn.value.data();
    const S* k = kn.value.data();
    const S* g = this->grad.data();
    for (Index co = 0; co < cout; ++co)
      for (Index p = 0; p < oh; ++p)
        for (Index q = 0; q < ow; ++q) {
          const S gv = g[(co * oh + p) * ow + q];
          if (gv == S(0)) continue;
          for (Index ci = 0; ci < cin; ++ci)
            for (Index i = 0; i < kh; ++i)
              for (Index j = 0; j < kw; ++j) {
                const Index xi = (ci * h + (p * sh + i)) * w + (q * sw + j);
                const Index ki = ((co * cin + ci) * kh + i) * kw + j;
                if (gx) xn.grad[xi] += gv * k[ki];
                if (gk) kn.grad[ki] += gv * x[xi];
              }
        }
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

template <typename S>
Tensor<S> binary_op(BinaryKind kind, const Tensor<S>& a, const Tensor<S>& b) {
  auto plan = make_broadcast_plan(a.shape(), b.shape());
  ArrayX<S> out;
  if (plan.same) {
    switch (kind) {
      case BinaryKind::Add: out = a.values() + b.values(); break;
      case BinaryKind::Sub: out = a.values() - b.values(); break;
      case BinaryKind::Mul: out = a.values() * b.values(); break;
      case BinaryKind::Div: out = a.values() / b.values(); break;
    }
  } else {
    out.resize(shape_numel(plan.out));
    const auto& av = a.values();
    const auto& bv = b.values();
    switch (kind) {
      case BinaryKind::Add:
        for_each_broadcast(plan, [&](Index o, Index ia, Index ib) { out[o] = av[ia] + bv[ib]; });
        break;
      case BinaryKind::Sub:
        for_each_broadcast(plan, [&](Index o, Index ia, Index ib) { out[o] = av[ia] - bv[ib]; });
        break;
      case BinaryKind::Mul:
        for_each_broadcast(plan, [&](Index o, Index ia, Index ib) { out[o] = av[ia] * bv[ib]; });
        break;
      case BinaryKind::Div:
        for_each_broadcast(plan, [&](Index o, Index ia, Index ib) { out[o] = av[ia] / bv[ib]; });
        break;
    }
  }
  Shape shape = plan.out;
  return make_op<S, BinaryNode<S>>(std::move(shape), std::move(out), {a.node(), b.node()}, kind,
                                   std::move(plan));
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinaryKind::Add, a, b);
}
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinaryKind::Sub, a, b);
}
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinaryKind::Mul, a, b);
}
template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary_op(detail::BinaryKind::Div, a, b);
}

template <typename S>
Tensor<S> operator+(const Tensor<S>& a, const Tensor<S>& b) { return add(a, b); }
template <typename S>
Tensor<S> operator-(const Tensor<S>& a, const Tensor<S>& b) { return sub(a, b); }
template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) { return mul(a, b); }
template <typename S>
Tensor<S> operator/(const Tensor<S>& a, const Tensor<S>& b) { return div(a, b); }

namespace detail {
template <typename S>
Tensor<S> unary_op(UnaryKind kind, const Tensor<S>& a, S c = S(0)) {
  ArrayX<S> out;
  const auto& v = a.values();
  switch (kind) {
    case UnaryKind::Neg: out = -v; break;
    case UnaryKind::Exp: out = v.exp(); break;
    case UnaryKind::Log:
      if ((v <= S(0)).any()) throw DomainError("log: non-positive input");
      out = v.log();
      break;
    case UnaryKind::Sqrt:
      if ((v < S(0)).any()) throw DomainError("sqrt: negative input");
      out = v.sqrt();
      break;
    case UnaryKind::Gelu: {
      out.resize(v.size());
      for (Index i = 0; i < v.size(); ++i) {
        const double x = static_cast<double>(v[i]);
        out[i] = static_cast<S>(x * 0.5 * std::erfc(-x * 0.7071067811865475244));
      }
      break;
    }
    case UnaryKind::MaxScalar: out = v.max(c); break;
    case UnaryKind::Scale: out = v * c; break;
    case UnaryKind::AddScalar: out = v + c; break;
  }
  Shape shape = a.shape();
  return make_op<S, UnaryNode<S>>(std::move(shape), std::move(out), {a.node()}, kind, c);
}
}  // namespace detail

template <typename S>
Tensor<S> neg(const Tensor<S>& a) { return detail::unary_op(detail::UnaryKind::Neg, a); }
template <typename S>
Tensor<S> exp(const Tensor<S>& a) { return detail::unary_op(detail::UnaryKind::Exp, a); }
template <typename S>
Tensor<S> log(const Tensor<S>& a) { return detail::unary_op(detail::UnaryKind::Log, a); }
template <typename S>
Tensor<S> sqrt(const Tensor<S>& a) { return detail::unary_op(detail::UnaryKind::Sqrt, a); }
// Exact Gaussian-CDF GELU: x * Phi(x).
template <typename S>
Tensor<S> gelu(const Tensor<S>& a) { return detail::unary_op(detail::UnaryKind::Gelu, a); }
template <typename S>
Tensor<S> max_scalar(const Tensor<S>& a, S c) {
  return detail::unary_op(detail::UnaryKind::MaxScalar, a, c);
}
template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) { return detail::unary_op(detail::UnaryKind::Scale, a, c); }
template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return detail::unary_op(detail::UnaryKind::AddScalar, a, c);
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

// Matrix product with optional leading batch dimension. Supported ranks:
// [P,Q]x[Q,R], [N,P,Q]x[N,Q,R], [N,P,Q]x[Q,R], [P,Q]x[N,Q,R].
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sa.size() > 3 || sb.size() < 2 || sb.size() > 3)
    throw ShapeError("matmul: ranks must be 2 or 3, got " + shape_str(sa) + " x " + shape_str(sb));
  const bool ab = sa.size() == 3, bb = sb.size() == 3;
  const Index rows = sa[ab ? 1 : 0], ia = sa[ab ? 2 : 1];
  const Index ib = sb[bb ? 1 : 0], cols = sb[bb ? 2 : 1];
  if (ia != ib)
    throw ShapeError("matmul: inner dimensions differ: " + shape_str(sa) + " x " + shape_str(sb));
  Index batch = 1;
  if (ab && bb) {
    if (sa[0] != sb[0]) throw ShapeError("matmul: batch dimensions differ");
    batch = sa[0];
  } else if (ab) {
    batch = sa[0];
  } else if (bb) {
    batch = sb[0];
  }
  const Index pa = rows * ia, pb = ia * cols, pc = rows * cols;
  ArrayX<S> out(batch * pc);
  for (Index i = 0; i < batch; ++i) {
    MatCMap<S> A(a.values().data() + (ab ? i * pa : 0), rows, ia);
    MatCMap<S> B(b.values().data() + (bb ? i * pb : 0), ia, cols);
    MatMap<S>(out.data() + i * pc, rows, cols) = A * B;
  }
  Shape shape = (ab || bb) ? Shape{batch, rows, cols} : Shape{rows, cols};
  return detail::make_op<S, detail::MatMulNode<S>>(std::move(shape), std::move(out),
                                                   {a.node(), b.node()}, batch, rows, ia, cols, ab,
                                                   bb);
}

// ---------------------------------------------------------------------------
// softmax / reductions
// ---------------------------------------------------------------------------

namespace detail {
inline int normalize_axis(int axis, std::size_t rank) {
  int a = axis;
  if (a < 0) a += static_cast<int>(rank);
  if (a < 0 || a >= static_cast<int>(rank))
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  return a;
}
}  // namespace detail

// Numerically stable softmax along `axis` (max-subtracted).
template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const auto& s = x.shape();
  const int ax = detail::normalize_axis(axis, s.size());
  Index outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const Index len = s[ax];
  const auto& v = x.values();
  ArrayX<S> out(v.size());
  for (Index o = 0; o < outer; ++o)
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * len * inner + i;
      S m = v[base];
      for (Index k = 1; k < len; ++k) m = std::max(m, v[base + k * inner]);
      S sum = S(0);
      for (Index k = 0; k < len; ++k) {
        const S e = std::exp(v[base + k * inner] - m);
        out[base + k * inner] = e;
        sum += e;
      }
      for (Index k = 0; k < len; ++k) out[base + k * inner] /= sum;
    }
  Shape shape = s;
  return detail::make_op<S, detail::SoftmaxNode<S>>(std::move(shape), std::move(out), {x.node()},
                                                    outer, len, inner);
}

namespace detail {
template <typename S>
Tensor<S> reduce_axis(const Tensor<S>& x, int axis, bool keepdims, bool mean_reduce) {
  const auto& s = x.shape();
  const int ax = normalize_axis(axis, s.size());
  Index outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[i];
  for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
  const Index len = s[ax];
  const auto& v = x.values();
  ArrayX<S> out = ArrayX<S>::Zero(outer * inner);
  for (Index o = 0; o < outer; ++o)
    for (Index k = 0; k < len; ++k) {
      const Index base = o * len * inner + k * inner;
      for (Index i = 0; i < inner; ++i) out[o * inner + i] += v[base + i];
    }
  if (mean_reduce) out /= static_cast<S>(len);
  Shape shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (static_cast<int>(i) == ax) {
      if (keepdims) shape.push_back(1);
    } else {
      shape.push_back(s[i]);
    }
  }
  if (shape.empty()) shape.push_back(1);
  return make_op<S, ReduceNode<S>>(std::move(shape), std::move(out), {x.node()}, outer, len, inner,
                                   mean_reduce);
}
}  // namespace detail

template <typename S>
Tensor<S> sum(const Tensor<S>& x, int axis, bool keepdims = false) {
  return detail::reduce_axis(x, axis, keepdims, false);
}
template <typename S>
Tensor<S> mean(const Tensor<S>& x, int axis, bool keepdims = false) {
  return detail::reduce_axis(x, axis, keepdims, true);
}
template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  ArrayX<S> out(1);
  out[0] = x.values().sum();
  return detail::make_op<S, detail::ReduceAllNode<S>>(Shape{1}, std::move(out), {x.node()}, false);
}
template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  ArrayX<S> out(1);
  out[0] = x.values().mean();
  return detail::make_op<S, detail::ReduceAllNode<S>>(Shape{1}, std::move(out), {x.node()}, true);
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

// Reshape; one extent may be -1 and is inferred.
template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  Index known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1 extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.size() % known != 0)
      throw ShapeError("reshape: cannot infer extent for " + shape_str(shape));
    shape[infer] = x.size() / known;
    known *= shape[infer];
  }
  if (known != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  ArrayX<S> out = x.values();
  return detail::make_op<S, detail::ReshapeNode<S>>(std::move(shape), std::move(out), {x.node()});
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
  const Index r = x.dim(0), c = x.dim(1);
  ArrayX<S> out(x.size());
  MatMap<S>(out.data(), c, r) = x.matrix().transpose();
  return detail::make_op<S, detail::Transpose2dNode<S>>(Shape{c, r}, std::move(out), {x.node()}, c,
                                                        r);
}

// Swap the two leading axes of a rank>=2 tensor.
template <typename S>
Tensor<S> swap_axes01(const Tensor<S>& x) {
  if (x.rank() < 2) throw ShapeError("swap_axes01: rank >= 2 required");
  const auto& s = x.shape();
  const Index d0 = s[0], d1 = s[1];
  Index inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  const auto& v = x.values();
  ArrayX<S> out(v.size());
  for (Index i = 0; i < d0; ++i)
    for (Index j = 0; j < d1; ++j)
      out.segment((j * d0 + i) * inner, inner) = v.segment((i * d1 + j) * inner, inner);
  Shape shape = s;
  std::swap(shape[0], shape[1]);
  return detail::make_op<S, detail::SwapAxes01Node<S>>(std::move(shape), std::move(out), {x.node()},
                                                       d1, d0, inner);
}

// Contiguous block [begin, end) along axis 0.
template <typename S>
Tensor<S> slice_axis0(const Tensor<S>& x, Index begin, Index end) {
  const auto& s = x.shape();
  if (s.empty() || begin < 0 || end > s[0] || begin >= end)
    throw ShapeError("slice_axis0: invalid range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") for " + shape_str(s));
  Index inner = 1;
  for (std::size_t i = 1; i < s.size(); ++i) inner *= s[i];
  ArrayX<S> out = x.values().segment(begin * inner, (end - begin) * inner);
  Shape shape = s;
  shape[0] = end - begin;
  return detail::make_op<S, detail::SliceAxis0Node<S>>(std::move(shape), std::move(out), {x.node()},
                                                       begin * inner);
}

// Column block [begin, end) of a rank-2 tensor.
template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, Index begin, Index end) {
  if (x.rank() != 2) throw ShapeError("slice_cols: rank-2 tensor required");
  const Index r = x.dim(0), c = x.dim(1);
  if (begin < 0 || end > c || begin >= end) throw ShapeError("slice_cols: invalid column range");
  ArrayX<S> out(r * (end - begin));
  MatMap<S>(out.data(), r, end - begin) = x.matrix().middleCols(begin, end - begin);
  return detail::make_op<S, detail::SliceColsNode<S>>(Shape{r, end - begin}, std::move(out),
                                                      {x.node()}, r, end - begin, c, begin);
}

template <typename S>
Tensor<S> concat_axis0(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_axis0: no parts");
  Shape shape = parts[0].shape();
  Index total0 = 0, flat = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat_axis0: rank mismatch");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] != shape[i]) throw ShapeError("concat_axis0: trailing extent mismatch");
    total0 += s[0];
    flat += p.size();
  }
  ArrayX<S> out(flat);
  std::vector<Index> sizes;
  std::vector<std::shared_ptr<detail::Node<S>>> parents;
  Index off = 0;
  for (const auto& p : parts) {
    out.segment(off, p.size()) = p.values();
    sizes.push_back(p.size());
    parents.push_back(p.node());
    off += p.size();
  }
  shape[0] = total0;
  return detail::make_op<S, detail::ConcatAxis0Node<S>>(std::move(shape), std::move(out),
                                                        std::move(parents), std::move(sizes));
}

// Rows of a rank-2 table selected by index; repeated indices accumulate in the
// backward scatter.
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<Index>& indices) {
  if (table.rank() != 2) throw ShapeError("gather_rows: rank-2 table required");
  const Index n = table.dim(0), d = table.dim(1);
  ArrayX<S> out(static_cast<Index>(indices.size()) * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= n)
      throw DomainError("gather_rows: index " + std::to_string(indices[r]) + " out of range");
    out.segment(static_cast<Index>(r) * d, d) = table.values().segment(indices[r] * d, d);
  }
  return detail::make_op<S, detail::GatherRowsNode<S>>(
      Shape{static_cast<Index>(indices.size()), d}, std::move(out), {table.node()}, indices, d);
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

// Valid (unpadded) 2-d cross-correlation. x: [C_in,H,W], k: [C_out,C_in,kh,kw].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, Index stride_h, Index stride_w) {
  if (x.rank() != 3 || kernel.rank() != 4)
    throw ShapeError("conv2d: expected x rank 3 and kernel rank 4");
  if (stride_h < 1 || stride_w < 1) throw ConfigError("conv2d: strides must be >= 1");
  const Index cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const Index cout = kernel.dim(0), kcin = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kcin != cin) throw ShapeError("conv2d: kernel input channels mismatch");
  if (kh > h || kw > w)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than input " +
                     shape_str(x.shape()));
  const Index oh = (h - kh) / stride_h + 1;
  const Index ow = (w - kw) / stride_w + 1;
  const S* xv = x.values().data();
  const S* kv = kernel.values().data();
  ArrayX<S> out = ArrayX<S>::Zero(cout * oh * ow);
  for (Index co = 0; co < cout; ++co)
    for (Index p = 0; p < oh; ++p)
      for (Index q = 0; q < ow; ++q) {
        S acc = S(0);
        for (Index ci = 0; ci < cin; ++ci)
          for (Index i = 0; i < kh; ++i) {
            const Index xrow = (ci * h + (p * stride_h + i)) * w + q * stride_w;
            const Index krow = ((co * cin + ci) * kh + i) * kw;
            for (Index j = 0; j < kw; ++j) acc += xv[xrow + j] * kv[krow + j];
          }
        out[(co * oh + p) * ow + q] = acc;
      }
  return detail::make_op<S, detail::Conv2dNode<S>>(Shape{cout, oh, ow}, std::move(out),
                                                   {x.node(), kernel.node()}, cin, h, w, cout, kh,
                                                   kw, stride_h, stride_w, oh, ow);
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, Index stride) {
  return conv2d(x, kernel, stride, stride);
}

// ---------------------------------------------------------------------------
// composite layers
// ---------------------------------------------------------------------------

// y = x W + b  for x: [N,in], W: [in,out], b: [out].
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
  return add(matmul(x, weight), bias);
}

// Group normalization over axis 0 channels of x: [C, ...]; gamma/beta: [C].
template <typename S>
Tensor<S> group_norm(const Tensor<S>& x, Index groups, const Tensor<S>& gamma,
                     const Tensor<S>& beta, double eps = 1e-5) {
  if (x.rank() < 1) throw ShapeError("group_norm: rank >= 1 required");
  const Index c = x.dim(0);
  if (groups < 1 || c % groups != 0)
    throw ConfigError("group_norm: channels " + std::to_string(c) + " not divisible by groups " +
                      std::to_string(groups));
  if (gamma.size() != c || beta.size() != c)
    throw ShapeError("group_norm: gamma/beta must have one entry per channel");
  const Index per_group = x.size() / groups;
  auto xg = reshape(x, {groups, per_group});
  auto m = mean(xg, 1, true);
  auto centered = sub(xg, m);
  auto var = mean(mul(centered, centered), 1, true);
  auto inv = div(centered, sqrt(add_scalar(var, static_cast<S>(eps))));
  auto y = reshape(inv, x.shape());
  Shape affine_shape = x.shape();
  for (std::size_t i = 1; i < affine_shape.size(); ++i) affine_shape[i] = 1;
  affine_shape[0] = c;
  return add(mul(y, reshape(gamma, affine_shape)), reshape(beta, affine_shape));
}

// Layer normalization over the last axis; gamma/beta: [d].
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     double eps = 1e-5) {
  const Index d = x.dim(-1);
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError("layer_norm: gamma/beta must match the last extent");
  auto m = mean(x, -1, true);
  auto centered = sub(x, m);
  auto var = mean(mul(centered, centered), -1, true);
  auto y = div(centered, sqrt(add_scalar(var, static_cast<S>(eps))));
  return add(mul(y, gamma), beta);
}

// Rows scaled to unit L2 norm.
template <typename S>
Tensor<S> l2_normalize_rows(const Tensor<S>& x, double eps = 1e-12) {
  auto sq = sum(mul(x, x), -1, true);
  return div(x, sqrt(add_scalar(sq, static_cast<S>(eps))));
}

// Inverted dropout; identity when not training or rate == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double rate, Rng& rng, bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
  const S keep_inv = static_cast<S>(1.0 / (1.0 - rate));
  ArrayX<S> mask(x.size());
  for (Index i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < rate ? S(0) : keep_inv;
  auto m = Tensor<S>::from_array(x.shape(), std::move(mask));
  return mul(x, m);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients accumulate additively into
// every reachable tensor with requires_grad; zeroing is explicit via
// Tensor::zero_grad. Calling backward twice on the same forward graph throws.
template <typename S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined()) throw GraphError("backward: empty tensor");
  auto root = loss.node();
  if (root->value.size() != 1)
    throw GraphError("backward: loss must be scalar, got shape " + shape_str(root->shape));
  if (root->backward_done)
    throw GraphError("backward: already called on this graph; re-run forward first");
  root->backward_done = true;
  if (!root->requires_grad) {
    root->ensure_grad();
    root->grad[0] = S(1);
    return;
  }
  std::vector<detail::Node<S>*> order;
  std::unordered_set<const detail::Node<S>*> seen;
  std::vector<std::pair<detail::Node<S>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node<S>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    (*it)->ensure_grad();
    (*it)->backprop();
  }
}

}  // namespace emod
