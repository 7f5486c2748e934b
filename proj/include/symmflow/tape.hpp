#pragma once

// Reverse-mode automatic differentiation over dense real arrays. A Tape
// records array-granular operations eagerly (values are computed at node
// construction), supports one backward sweep, and is then discarded.
// Composite operations with hand-written adjoints (network evaluation,
// batched linear solves) plug in through CustomOp.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "symmflow/array.hpp"
#include "symmflow/common.hpp"
#include "symmflow/linalg.hpp"

namespace symmflow::ad {

class Tape;
struct Node;

// Floor used inside log / division guards so numerical edge cases decay
// to large-but-finite values instead of crashing the sweep.
inline constexpr double kGuardFloor = 1e-12;
inline constexpr double kGuardTiny = 1e-300;

struct Var {
  Tape* tape = nullptr;
  int32_t id = -1;

  bool defined() const { return tape != nullptr && id >= 0; }
  const NdArray& val() const;
  const std::vector<int64_t>& dims() const { return val().dims(); }
  int64_t numel() const { return val().numel(); }
  double scalar() const { return val().value(); }
};

class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  /// Accumulate adjoint contributions into the inputs. `grad_of(pos)`
  /// returns the (zero-initialized) adjoint buffer of input `pos`.
  virtual void backward(std::span<const NdArray> inputs, const NdArray& out_val,
                        const NdArray& out_adj,
                        const std::function<double*(size_t)>& grad_of) = 0;
};

enum class Op : uint8_t {
  Leaf, Const,
  Add, Sub, Mul, Div,
  AddC, MulC, PowI,
  Sin, Cos, Exp, Log, Tanh, Sigmoid, Swish, Abs, Sqrt, Asin, HingeC,
  MatVec, MatMul,
  Sum, Mean, Norm,
  SumRows, RepeatCols,
  Gather, Concat, Slice, Reshape,
  MulSV, DivSV,
  StopGrad, Custom,
};

struct Node {
  Op op;
  NdArray val;
  std::vector<int32_t> ins;
  double carg = 0.0;
  int64_t iarg = 0;
  std::shared_ptr<const std::vector<int64_t>> idx;
  std::unique_ptr<CustomOp> custom;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// When false, composite ops skip caching factorizations; backward()
  /// is rejected. Used for chunked no-grad scoring.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Var leaf(NdArray v) { return push(Op::Leaf, std::move(v), {}); }
  Var constant(NdArray v) { return push(Op::Const, std::move(v), {}); }

  Var push(Op op, NdArray val, std::vector<int32_t> ins, double carg = 0.0,
           int64_t iarg = 0,
           std::shared_ptr<const std::vector<int64_t>> idx = nullptr,
           std::unique_ptr<CustomOp> custom = nullptr) {
    require(!swept_, "tape already swept backward; build a new tape");
    Node n;
    n.op = op;
    n.val = std::move(val);
    n.ins = std::move(ins);
    n.carg = carg;
    n.iarg = iarg;
    n.idx = std::move(idx);
    n.custom = std::move(custom);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar root. Callable once per tape.
  void backward(Var root) {
    require(root.tape == this, "backward: var belongs to another tape");
    require(grad_enabled_, "backward: tape was built with gradients disabled");
    require(node(root.id).val.numel() == 1, "backward: root must be scalar");
    require(!swept_, "backward: tape already swept");
    swept_ = true;
    adj_.assign(nodes_.size(), NdArray{});
    ensure_adj(root.id);
    adj_[static_cast<size_t>(root.id)][0] = 1.0;
    for (int32_t i = root.id; i >= 0; --i) {
      if (!adj_[static_cast<size_t>(i)].defined()) continue;
      propagate(i);
    }
  }

  bool swept() const { return swept_; }

  /// Adjoint of a node after backward(); zeros if unreachable.
  NdArray adjoint(Var v) const {
    require(swept_, "adjoint: backward() has not run");
    const NdArray& a = adj_[static_cast<size_t>(v.id)];
    if (a.defined()) return a;
    return NdArray(v.val().dims());
  }

 private:
  friend struct Var;

  double* ensure_adj(int32_t id) {
    NdArray& a = adj_[static_cast<size_t>(id)];
    if (!a.defined()) a = NdArray(nodes_[static_cast<size_t>(id)].val.dims());
    return a.data();
  }

  void propagate(int32_t id);

  std::vector<Node> nodes_;
  std::vector<NdArray> adj_;
  bool swept_ = false;
  bool grad_enabled_ = true;
};

inline const NdArray& Var::val() const { return tape->node(id).val; }

// ---------------------------------------------------------------------------
// Builders

namespace detail {

inline void check_same_tape(Var a, Var b) {
  require(a.tape == b.tape, "operands belong to different tapes");
}

inline void check_same_shape(Var a, Var b, const char* what) {
  require(a.val().same_shape(b.val()),
          std::string(what) + ": shape mismatch " + a.val().shape_str() +
              " vs " + b.val().shape_str());
}

inline double guard_div(double b) {
  return std::fabs(b) < kGuardTiny ? (std::signbit(b) ? -kGuardFloor : kGuardFloor) : b;
}

template <typename F>
Var map1(Op op, Var a, F f, double carg = 0.0, int64_t iarg = 0) {
  NdArray out(a.val().dims());
  const double* x = a.val().data();
  double* y = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  return a.tape->push(op, std::move(out), {a.id}, carg, iarg);
}

template <typename F>
Var map2(Op op, Var a, Var b, F f) {
  check_same_tape(a, b);
  check_same_shape(a, b, "elementwise op");
  NdArray out(a.val().dims());
  const double* x = a.val().data();
  const double* yv = b.val().data();
  double* y = out.data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) y[i] = f(x[i], yv[i]);
  return a.tape->push(op, std::move(out), {a.id, b.id});
}

}  // namespace detail

inline Var add(Var a, Var b) { return detail::map2(Op::Add, a, b, [](double x, double y) { return x + y; }); }
inline Var sub(Var a, Var b) { return detail::map2(Op::Sub, a, b, [](double x, double y) { return x - y; }); }
inline Var mul(Var a, Var b) { return detail::map2(Op::Mul, a, b, [](double x, double y) { return x * y; }); }
inline Var div(Var a, Var b) {
  return detail::map2(Op::Div, a, b, [](double x, double y) { return x / detail::guard_div(y); });
}

inline Var add_const(Var a, double c) { return detail::map1(Op::AddC, a, [c](double x) { return x + c; }, c); }
inline Var scalar_mul(Var a, double c) { return detail::map1(Op::MulC, a, [c](double x) { return x * c; }, c); }

inline Var pow_int(Var a, int64_t n) {
  require(n >= 0, "pow_int: exponent must be non-negative (use div for inverses)");
  return detail::map1(Op::PowI, a, [n](double x) {
    double r = 1.0, base = x;
    for (int64_t e = n; e > 0; e >>= 1, base *= base)
      if (e & 1) r *= base;
    return r;
  }, 0.0, n);
}

inline Var sin(Var a) { return detail::map1(Op::Sin, a, [](double x) { return std::sin(x); }); }
inline Var cos(Var a) { return detail::map1(Op::Cos, a, [](double x) { return std::cos(x); }); }
inline Var exp(Var a) { return detail::map1(Op::Exp, a, [](double x) { return std::exp(x); }); }
inline Var log(Var a) {
  return detail::map1(Op::Log, a, [](double x) { return std::log(std::max(x, kGuardFloor)); });
}
inline Var tanh(Var a) { return detail::map1(Op::Tanh, a, [](double x) { return std::tanh(x); }); }

inline double sigmoid_val(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Var sigmoid(Var a) { return detail::map1(Op::Sigmoid, a, [](double x) { return sigmoid_val(x); }); }
inline Var swish(Var a) { return detail::map1(Op::Swish, a, [](double x) { return x * sigmoid_val(x); }); }
inline Var abs(Var a) { return detail::map1(Op::Abs, a, [](double x) { return std::fabs(x); }); }
inline Var sqrt(Var a) { return detail::map1(Op::Sqrt, a, [](double x) { return std::sqrt(std::max(x, 0.0)); }); }
inline Var asin(Var a) {
  return detail::map1(Op::Asin, a, [](double x) { return std::asin(std::clamp(x, -1.0, 1.0)); });
}
/// max(x - c, 0); subgradient 0 at the kink.
inline Var hinge(Var a, double c) {
  return detail::map1(Op::HingeC, a, [c](double x) { return std::max(x - c, 0.0); }, c);
}

inline Var matvec(Var m, Var v) {
  detail::check_same_tape(m, v);
  require(m.val().rank() == 2 && v.val().rank() == 1 && m.dims()[1] == v.dims()[0],
          "matvec: need [r,c] x [c]");
  int64_t r = m.dims()[0], c = m.dims()[1];
  NdArray out({r});
  linalg::dgemm(false, false, r, 1, c, 1.0, m.val().data(), v.val().data(), 0.0, out.data());
  return m.tape->push(Op::MatVec, std::move(out), {m.id, v.id});
}

inline Var matmul(Var a, Var b) {
  detail::check_same_tape(a, b);
  require(a.val().rank() == 2 && b.val().rank() == 2 && a.dims()[1] == b.dims()[0],
          "matmul: need [m,k] x [k,n]");
  int64_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[1];
  NdArray out({m, n});
  linalg::dgemm(false, false, m, n, k, 1.0, a.val().data(), b.val().data(), 0.0, out.data());
  return a.tape->push(Op::MatMul, std::move(out), {a.id, b.id});
}

inline Var sum(Var a) {
  return a.tape->push(Op::Sum, NdArray::scalar(pairwise_sum(a.val().data(), a.numel())), {a.id});
}
inline Var mean(Var a) {
  return a.tape->push(
      Op::Mean,
      NdArray::scalar(pairwise_sum(a.val().data(), a.numel()) / static_cast<double>(a.numel())),
      {a.id});
}
inline Var norm(Var a) {
  double s = 0.0;
  const double* x = a.val().data();
  for (int64_t i = 0; i < a.numel(); ++i) s += x[i] * x[i];
  return a.tape->push(Op::Norm, NdArray::scalar(std::sqrt(s)), {a.id});
}

inline Var sum_rows(Var a) {
  require(a.val().rank() == 2, "sum_rows: need rank-2 input");
  int64_t r = a.dims()[0], c = a.dims()[1];
  NdArray out({r});
  for (int64_t i = 0; i < r; ++i) out[i] = pairwise_sum(a.val().data() + i * c, c);
  return a.tape->push(Op::SumRows, std::move(out), {a.id});
}

inline Var repeat_cols(Var a, int64_t cols) {
  require(a.val().rank() == 1, "repeat_cols: need rank-1 input");
  int64_t r = a.dims()[0];
  NdArray out({r, cols});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) = a.val()[i];
  return a.tape->push(Op::RepeatCols, std::move(out), {a.id}, 0.0, cols);
}

inline Var gather(Var a, std::shared_ptr<const std::vector<int64_t>> idx) {
  int64_t n = a.numel();
  NdArray out({static_cast<int64_t>(idx->size())});
  for (size_t i = 0; i < idx->size(); ++i) {
    int64_t j = (*idx)[i];
    require(j >= 0 && j < n, "gather: index out of range");
    out[static_cast<int64_t>(i)] = a.val()[j];
  }
  return a.tape->push(Op::Gather, std::move(out), {a.id}, 0.0, 0, std::move(idx));
}

inline Var concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat: empty input list");
  Tape* t = parts[0].tape;
  int64_t total = 0;
  std::vector<int32_t> ins;
  for (Var p : parts) {
    require(p.tape == t, "concat: vars from different tapes");
    total += p.numel();
    ins.push_back(p.id);
  }
  NdArray out({total});
  int64_t o = 0;
  for (Var p : parts) {
    const double* x = p.val().data();
    for (int64_t i = 0; i < p.numel(); ++i) out[o + i] = x[i];
    o += p.numel();
  }
  return t->push(Op::Concat, std::move(out), std::move(ins));
}

inline Var slice(Var a, int64_t offset, int64_t len) {
  require(offset >= 0 && len >= 0 && offset + len <= a.numel(), "slice: out of range");
  NdArray out({len});
  const double* x = a.val().data();
  for (int64_t i = 0; i < len; ++i) out[i] = x[offset + i];
  return a.tape->push(Op::Slice, std::move(out), {a.id}, 0.0, offset);
}

inline Var reshape(Var a, std::vector<int64_t> dims) {
  return a.tape->push(Op::Reshape, a.val().reshaped(std::move(dims)), {a.id});
}

/// Array times rank-0 scalar var.
inline Var scale_by(Var a, Var s) {
  detail::check_same_tape(a, s);
  require(s.numel() == 1, "scale_by: scale must be scalar");
  double sv = s.val()[0];
  NdArray out(a.val().dims());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.val()[i] * sv;
  return a.tape->push(Op::MulSV, std::move(out), {a.id, s.id});
}

/// Array divided by rank-0 scalar var (guarded near zero).
inline Var div_by(Var a, Var s) {
  detail::check_same_tape(a, s);
  require(s.numel() == 1, "div_by: divisor must be scalar");
  double sv = detail::guard_div(s.val()[0]);
  NdArray out(a.val().dims());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = a.val()[i] / sv;
  return a.tape->push(Op::DivSV, std::move(out), {a.id, s.id});
}

/// Value passes through; gradient does not.
inline Var stop_gradient(Var a) {
  return a.tape->push(Op::StopGrad, a.val(), {a.id});
}

inline Var custom_op(Tape& t, std::vector<Var> inputs, NdArray out,
                     std::unique_ptr<CustomOp> op) {
  std::vector<int32_t> ins;
  for (Var v : inputs) {
    require(v.tape == &t, "custom_op: vars from different tapes");
    ins.push_back(v.id);
  }
  return t.push(Op::Custom, std::move(out), std::move(ins), 0.0, 0, nullptr, std::move(op));
}

// ---------------------------------------------------------------------------
// Backward dispatch

inline void Tape::propagate(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const NdArray& g = adj_[static_cast<size_t>(id)];
  const int64_t cnt = n.val.numel();
  auto in_val = [&](size_t k) -> const NdArray& {
    return nodes_[static_cast<size_t>(n.ins[k])].val;
  };
  auto in_adj = [&](size_t k) -> double* { return ensure_adj(n.ins[k]); };

  switch (n.op) {
    case Op::Leaf:
    case Op::Const:
    case Op::StopGrad:
      break;
    case Op::Add: {
      double *a = in_adj(0), *b = in_adj(1);
      for (int64_t i = 0; i < cnt; ++i) { a[i] += g[i]; b[i] += g[i]; }
      break;
    }
    case Op::Sub: {
      double *a = in_adj(0), *b = in_adj(1);
      for (int64_t i = 0; i < cnt; ++i) { a[i] += g[i]; b[i] -= g[i]; }
      break;
    }
    case Op::Mul: {
      const double *x = in_val(0).data(), *y = in_val(1).data();
      double *a = in_adj(0), *b = in_adj(1);
      for (int64_t i = 0; i < cnt; ++i) { a[i] += g[i] * y[i]; b[i] += g[i] * x[i]; }
      break;
    }
    case Op::Div: {
      const double *x = in_val(0).data(), *y = in_val(1).data();
      double *a = in_adj(0), *b = in_adj(1);
      for (int64_t i = 0; i < cnt; ++i) {
        double d = detail::guard_div(y[i]);
        a[i] += g[i] / d;
        b[i] -= g[i] * x[i] / (d * d);
      }
      break;
    }
    case Op::AddC: {
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i];
      break;
    }
    case Op::MulC: {
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] * n.carg;
      break;
    }
    case Op::PowI: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      int64_t p = n.iarg;
      for (int64_t i = 0; i < cnt; ++i) {
        double d = 0.0;
        if (p > 0) {
          d = static_cast<double>(p);
          for (int64_t e = 0; e < p - 1; ++e) d *= x[i];
        }
        a[i] += g[i] * d;
      }
      break;
    }
    case Op::Sin: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] * std::cos(x[i]);
      break;
    }
    case Op::Cos: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] -= g[i] * std::sin(x[i]);
      break;
    }
    case Op::Exp: {
      const double* y = n.val.data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] * y[i];
      break;
    }
    case Op::Log: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] / std::max(x[i], kGuardFloor);
      break;
    }
    case Op::Tanh: {
      const double* y = n.val.data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Sigmoid: {
      const double* y = n.val.data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::Swish: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) {
        double s = sigmoid_val(x[i]);
        a[i] += g[i] * (s + x[i] * s * (1.0 - s));
      }
      break;
    }
    case Op::Abs: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i)
        a[i] += g[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
      break;
    }
    case Op::Sqrt: {
      const double* y = n.val.data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i] / (2.0 * y[i] + kGuardFloor);
      break;
    }
    case Op::Asin: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) {
        double c = std::clamp(x[i], -1.0, 1.0);
        a[i] += g[i] / std::sqrt(std::max(1.0 - c * c, kGuardFloor));
      }
      break;
    }
    case Op::HingeC: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i)
        if (x[i] > n.carg) a[i] += g[i];
      break;
    }
    case Op::MatVec: {
      const NdArray& m = in_val(0);
      const NdArray& v = in_val(1);
      int64_t r = m.dims()[0], c = m.dims()[1];
      double* ma = in_adj(0);
      double* va = in_adj(1);
      // m_adj += g v^T ; v_adj += m^T g
      linalg::dgemm(false, false, r, c, 1, 1.0, g.data(), v.data(), 1.0, ma);
      linalg::dgemm(true, false, c, 1, r, 1.0, m.data(), g.data(), 1.0, va);
      break;
    }
    case Op::MatMul: {
      const NdArray& a = in_val(0);
      const NdArray& b = in_val(1);
      int64_t m = a.dims()[0], k = a.dims()[1], nn = b.dims()[1];
      linalg::dgemm(false, true, m, k, nn, 1.0, g.data(), b.data(), 1.0, in_adj(0));
      linalg::dgemm(true, false, k, nn, m, 1.0, a.data(), g.data(), 1.0, in_adj(1));
      break;
    }
    case Op::Sum: {
      double* a = in_adj(0);
      double gv = g[0];
      for (int64_t i = 0; i < in_val(0).numel(); ++i) a[i] += gv;
      break;
    }
    case Op::Mean: {
      double* a = in_adj(0);
      int64_t m = in_val(0).numel();
      double gv = g[0] / static_cast<double>(m);
      for (int64_t i = 0; i < m; ++i) a[i] += gv;
      break;
    }
    case Op::Norm: {
      const double* x = in_val(0).data();
      double* a = in_adj(0);
      double y = n.val[0] + kGuardFloor;
      for (int64_t i = 0; i < in_val(0).numel(); ++i) a[i] += g[0] * x[i] / y;
      break;
    }
    case Op::SumRows: {
      const NdArray& x = in_val(0);
      int64_t r = x.dims()[0], c = x.dims()[1];
      double* a = in_adj(0);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) a[i * c + j] += g[i];
      break;
    }
    case Op::RepeatCols: {
      int64_t r = in_val(0).dims()[0], c = n.iarg;
      double* a = in_adj(0);
      for (int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) s += g[i * c + j];
        a[i] += s;
      }
      break;
    }
    case Op::Gather: {
      double* a = in_adj(0);
      const auto& idx = *n.idx;
      for (size_t i = 0; i < idx.size(); ++i) a[idx[i]] += g[static_cast<int64_t>(i)];
      break;
    }
    case Op::Concat: {
      int64_t o = 0;
      for (size_t k = 0; k < n.ins.size(); ++k) {
        double* a = in_adj(k);
        int64_t m = in_val(k).numel();
        for (int64_t i = 0; i < m; ++i) a[i] += g[o + i];
        o += m;
      }
      break;
    }
    case Op::Slice: {
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[n.iarg + i] += g[i];
      break;
    }
    case Op::Reshape: {
      double* a = in_adj(0);
      for (int64_t i = 0; i < cnt; ++i) a[i] += g[i];
      break;
    }
    case Op::MulSV: {
      const double* x = in_val(0).data();
      double sv = in_val(1)[0];
      double* a = in_adj(0);
      double* s = in_adj(1);
      double acc = 0.0;
      for (int64_t i = 0; i < cnt; ++i) {
        a[i] += g[i] * sv;
        acc += g[i] * x[i];
      }
      s[0] += acc;
      break;
    }
    case Op::DivSV: {
      const double* x = in_val(0).data();
      double sv = detail::guard_div(in_val(1)[0]);
      double* a = in_adj(0);
      double* s = in_adj(1);
      double acc = 0.0;
      for (int64_t i = 0; i < cnt; ++i) {
        a[i] += g[i] / sv;
        acc += g[i] * x[i];
      }
      s[0] -= acc / (sv * sv);
      break;
    }
    case Op::Custom: {
      std::vector<NdArray> ins;
      ins.reserve(n.ins.size());
      for (size_t k = 0; k < n.ins.size(); ++k) ins.push_back(in_val(k));
      n.custom->backward(ins, n.val, g, [&](size_t k) { return in_adj(k); });
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient checking and Adam

/// Builds a scalar expression from a leaf holding the parameter vector.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Max over checked coordinates of |analytic - central| / (|central| + 1e-8).
/// `coords` empty means every coordinate.
inline double gradient_check(const ScalarFn& f, const std::vector<double>& p,
                             double h = 1e-5, std::vector<int64_t> coords = {}) {
  std::vector<double> analytic(p.size());
  {
    Tape t;
    Var leaf = t.leaf(NdArray::from(p));
    Var root = f(t, leaf);
    require_numeric(std::isfinite(root.scalar()), "gradient_check: non-finite value");
    t.backward(root);
    NdArray g = t.adjoint(leaf);
    for (size_t i = 0; i < p.size(); ++i) analytic[i] = g[static_cast<int64_t>(i)];
  }
  auto eval = [&](const std::vector<double>& q) {
    Tape t;
    t.set_grad_enabled(false);
    double v = f(t, t.leaf(NdArray::from(q))).scalar();
    require_numeric(std::isfinite(v), "gradient_check: non-finite value");
    return v;
  };
  if (coords.empty()) {
    coords.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i) coords[i] = static_cast<int64_t>(i);
  }
  double worst = 0.0;
  std::vector<double> q = p;
  for (int64_t i : coords) {
    size_t k = static_cast<size_t>(i);
    q[k] = p[k] + h;
    double fp = eval(q);
    q[k] = p[k] - h;
    double fm = eval(q);
    q[k] = p[k];
    double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::fabs(analytic[k] - fd) / (std::fabs(fd) + 1e-8));
  }
  return worst;
}

struct AdamState {
  int64_t step = 0;
  std::vector<double> m, v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      AdamState& st, double lr) {
  require(params.size() == grads.size() && params.size() == st.m.size(),
          "adam_step: size mismatch");
  for (size_t i = 0; i < grads.size(); ++i)
    require_numeric(std::isfinite(grads[i]),
                    "adam_step: non-finite gradient at parameter index " + std::to_string(i));
  st.step += 1;
  double b1t = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  double b2t = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grads[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grads[i] * grads[i];
    double mhat = st.m[i] / b1t;
    double vhat = st.v[i] / b2t;
    params[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

}  // namespace symmflow::ad
