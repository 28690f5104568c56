#pragma once

// Tape-based reverse-mode differentiation. A Tape lives for one forward
// pass; every op appends a node holding its value and a closure that pushes
// the node's gradient into its inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "algnet/params.hpp"
#include "algnet/tensor.hpp"

namespace algnet {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape is.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  inline const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return push(std::move(value), nullptr, false, {}, nullptr); }

  /// Leaf whose gradient can be read back with grad() after backward().
  Var variable(Tensor value) { return push(std::move(value), nullptr, true, {}, nullptr); }

  /// Leaf bound to a parameter. The value is referenced, not copied, and the
  /// gradient is accumulated into Parameter::grad by backward(). Repeated
  /// calls for the same parameter return the same node.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(Tensor(), &p.value, true, {}, &p);
    param_nodes_.emplace(&p, v.id());
    return v;
  }
  Var param(ParamStore& store, std::string_view name) { return param(store.get(name)); }

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient accumulator for v, zero-initialised on first use.
  Tensor& grad_buffer(Var v) {
    Node& n = nodes_[v.id()];
    if (!n.has_grad) {
      n.grad = Tensor(value(v).shape(), 0.0);
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Gradient of the last backward() target w.r.t. v (zeros if unreached).
  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.has_grad ? n.grad : Tensor(value(v).shape(), 0.0);
  }

  /// Appends an op result. Throws NumericError if the value is not finite.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var record(std::string_view op, Tensor value, std::span<const Var> inputs,
             BackwardFn backward) {
    if (!value.all_finite()) {
      throw NumericError("non-finite value produced by " + std::string(op) + " (shape " +
                         to_string(value.shape()) + ")");
    }
    bool needs = false;
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw Error(std::string(op) + ": input from a different tape");
      needs = needs || requires_grad(in);
    }
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : BackwardFn{},
                nullptr);
  }

  /// Reverse sweep from a scalar. Parameter gradients are added to
  /// Parameter::grad; unreached parameters keep whatever they held.
  void backward(Var loss) {
    if (value(loss).size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got shape " +
                       to_string(value(loss).shape()));
    }
    for (Node& n : nodes_) {
      n.has_grad = false;
      n.grad = Tensor();
    }
    grad_buffer(loss).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        auto& dst = n.param->grad.storage();
        const auto& src = n.grad.storage();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Var push(Tensor value, const Tensor* external, bool requires_grad, BackwardFn backward,
           Parameter* param) {
    Node n;
    n.value = std::move(value);
    n.external = external;
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    n.param = param;
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  // deque: node references stay valid while ops append.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(*this); }

namespace detail {

inline void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

inline void accumulate(Tape& tape, Var v, const Tensor& g, double scale = 1.0) {
  if (!tape.requires_grad(v)) return;
  auto& dst = tape.grad_buffer(v).storage();
  const auto& src = g.storage();
  if (scale == 1.0) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  } else {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

// C[m x n] += A[m x k] * B[k x n]; inner index ascending for every entry, so
// computing a single row gives the same bits as the full product.
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += G[m x n] * B[k x n]^T
inline void gemm_nt(const double* g, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* grow = g + i * n;
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      c[i * k + p] += s;
    }
  }
}

// C[k x n] += A[m x k]^T * G[m x n]
inline void gemm_tn(const double* a, const double* g, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* grow = g + i * n;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_same_shape("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    detail::accumulate(t, a, g);
    detail::accumulate(t, b, g);
  });
}

inline Var sub(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_same_shape("sub", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    detail::accumulate(t, a, g);
    detail::accumulate(t, b, g, -1.0);
  });
}

/// Hadamard product.
inline Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_same_shape("mul", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape().record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a);
      const Tensor& bval = b.value();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bval[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b);
      const Tensor& aval = a.value();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * aval[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= c;
  return a.tape().record("scale", std::move(out), {a},
                         [a, c](Tape& t, const Tensor& g) { detail::accumulate(t, a, g, c); });
}

/// Sum of equally shaped terms, left to right.
inline Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw Error("add_n: no terms");
  Tensor out = terms[0].value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const Tensor& tv = terms[k].value();
    detail::require_same_shape("add_n", out, tv);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
  }
  std::vector<Var> ins(terms.begin(), terms.end());
  return terms[0].tape().record("add_n", std::move(out), terms,
                                [ins](Tape& t, const Tensor& g) {
                                  for (const Var& v : ins) detail::accumulate(t, v, g);
                                });
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = sigmoid_scalar(v);
  return x.tape().record("sigmoid", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    auto& gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = sigmoid_scalar(xv[i]);
      gx[i] += g[i] * s * (1.0 - s);
    }
  });
}

inline Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  return x.tape().record("tanh", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    auto& gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double y = std::tanh(xv[i]);
      gx[i] += g[i] * (1.0 - y * y);
    }
  });
}

inline Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record("relu", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    auto& gx = t.grad_buffer(x);
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {
struct MatDims {
  std::size_t m, k, n;
};

inline MatDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2) {
    throw ShapeError("matmul: unsupported ranks " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.rank() == 2 ? a.dim(0) : 1;
  const std::size_t k = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const std::size_t kb = b.dim(0);
  const std::size_t n = b.rank() == 2 ? b.dim(1) : 1;
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ for " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  return {m, k, n};
}

inline Shape matmul_shape(const Tensor& a, const Tensor& b, const MatDims& d) {
  if (a.rank() == 2 && b.rank() == 2) return {d.m, d.n};
  if (a.rank() == 2) return {d.m};
  if (b.rank() == 2) return {d.n};
  return {};
}
}  // namespace detail

/// Matrix product. A vector on the left acts as a row, on the right as a
/// column; vector x vector is the dot product.
inline Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto d = detail::matmul_dims(av, bv);
  Tensor out(detail::matmul_shape(av, bv, d), 0.0);
  detail::gemm_nn(av.data().data(), bv.data().data(), out.data().data(), d.m, d.k, d.n);
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b, d](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      detail::gemm_nt(g.data().data(), b.value().data().data(),
                      t.grad_buffer(a).data().data(), d.m, d.n, d.k);
    }
    if (t.requires_grad(b)) {
      detail::gemm_tn(a.value().data().data(), g.data().data(),
                      t.grad_buffer(b).data().data(), d.m, d.k, d.n);
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw ShapeError("transpose: needs a matrix, got " + to_string(av.shape()));
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return a.tape().record("transpose", std::move(out), {a}, [a, r, c](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    auto& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

// ---------------------------------------------------------------------------
// Structural

/// Concatenation of vectors (axis 0), or of matrices along rows (axis 0) or
/// columns (axis 1).
inline Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  const std::size_t rank = parts[0].value().rank();
  if (rank == 0 || rank > 2 || axis >= rank) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for shape " +
                     to_string(parts[0].value().shape()));
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  std::vector<std::size_t> extents;
  for (const Var& p : ins) {
    const Tensor& pv = p.value();
    if (pv.rank() != rank) throw ShapeError("concat: rank mismatch");
    for (std::size_t ax = 0; ax < rank; ++ax) {
      if (ax != axis && pv.dim(ax) != parts[0].value().dim(ax)) {
        throw ShapeError("concat: axis mismatch " + to_string(pv.shape()) + " vs " +
                         to_string(parts[0].value().shape()));
      }
    }
    extents.push_back(pv.dim(axis));
  }
  std::size_t total = 0;
  for (std::size_t e : extents) total += e;

  if (rank == 1 || axis == 0) {
    Shape shape = parts[0].value().shape();
    shape[0] = total;
    Tensor out(shape);
    std::size_t off = 0;
    for (const Var& p : ins) {
      const auto src = p.value().data();
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
      off += src.size();
    }
    return ins[0].tape().record("concat", std::move(out), parts,
                                [ins](Tape& t, const Tensor& g) {
                                  std::size_t pos = 0;
                                  for (const Var& p : ins) {
                                    const std::size_t n = p.value().size();
                                    if (t.requires_grad(p)) {
                                      auto& gp = t.grad_buffer(p);
                                      for (std::size_t i = 0; i < n; ++i) gp[i] += g[pos + i];
                                    }
                                    pos += n;
                                  }
                                });
  }

  const std::size_t rows = parts[0].value().dim(0);
  Tensor out(Shape{rows, total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < ins.size(); ++k) {
    const Tensor& pv = ins[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < extents[k]; ++c) out[r * total + col + c] = pv[r * extents[k] + c];
    col += extents[k];
  }
  return ins[0].tape().record(
      "concat", std::move(out), parts, [ins, extents, rows, total](Tape& t, const Tensor& g) {
        std::size_t first = 0;
        for (std::size_t k = 0; k < ins.size(); ++k) {
          if (t.requires_grad(ins[k])) {
            auto& gp = t.grad_buffer(ins[k]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < extents[k]; ++c)
                gp[r * extents[k] + c] += g[r * total + first + c];
          }
          first += extents[k];
        }
      });
}

inline Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

/// Stacks equally sized vectors as the rows of a matrix.
inline Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw Error("stack_rows: no rows");
  const std::size_t n = rows[0].value().size();
  for (const Var& r : rows) {
    if (r.value().rank() != 1 || r.value().size() != n) {
      throw ShapeError("stack_rows: expected vectors of length " + std::to_string(n) + ", got " +
                       to_string(r.value().shape()));
    }
  }
  std::vector<Var> ins(rows.begin(), rows.end());
  Tensor out(Shape{ins.size(), n});
  for (std::size_t i = 0; i < ins.size(); ++i) {
    const auto src = ins[i].value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return ins[0].tape().record("stack_rows", std::move(out), rows,
                              [ins, n](Tape& t, const Tensor& g) {
                                for (std::size_t i = 0; i < ins.size(); ++i) {
                                  if (!t.requires_grad(ins[i])) continue;
                                  auto& gi = t.grad_buffer(ins[i]);
                                  for (std::size_t j = 0; j < n; ++j) gi[j] += g[i * n + j];
                                }
                              });
}

/// Row i of a matrix, as a vector.
inline Var row(Var a, std::size_t i) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || i >= av.dim(0)) {
    throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                     to_string(av.shape()));
  }
  const std::size_t n = av.dim(1);
  Tensor out(Shape{n});
  std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(i * n), n, out.data().begin());
  return a.tape().record("row", std::move(out), {a}, [a, i, n](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    auto& ga = t.grad_buffer(a);
    for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j];
  });
}

/// Columns [begin, begin + count) of a matrix, or elements of a vector.
inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (av.rank() < 1 || av.rank() > 2 || begin + count > av.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " +
                     to_string(av.shape()));
  }
  const std::size_t rows = av.rows(), cols = av.cols();
  Shape shape = av.rank() == 2 ? Shape{rows, count} : Shape{count};
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = av[r * cols + begin + c];
  return a.tape().record("slice_cols", std::move(out), {a},
                         [a, begin, count, rows, cols](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(a)) return;
                           auto& ga = t.grad_buffer(a);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < count; ++c)
                               ga[r * cols + begin + c] += g[r * count + c];
                         });
}

/// Sum of the selected rows of `table`. Repeated indices count repeatedly.
inline Var embedding_sum(Var table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw ShapeError("embedding_sum: table must be a matrix");
  const std::size_t rows = tv.dim(0), n = tv.dim(1);
  for (std::size_t idx : indices) {
    if (idx >= rows) {
      throw Error("embedding_sum: index " + std::to_string(idx) + " out of range for " +
                  std::to_string(rows) + " rows");
    }
  }
  Tensor out(Shape{n}, 0.0);
  for (std::size_t idx : indices)
    for (std::size_t j = 0; j < n; ++j) out[j] += tv[idx * n + j];
  std::vector<std::size_t> idx_copy(indices.begin(), indices.end());
  return table.tape().record("embedding_sum", std::move(out), {table},
                             [table, idx_copy, n](Tape& t, const Tensor& g) {
                               if (!t.requires_grad(table)) return;
                               auto& gt = t.grad_buffer(table);
                               for (std::size_t idx : idx_copy)
                                 for (std::size_t j = 0; j < n; ++j) gt[idx * n + j] += g[j];
                             });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    const double gv = g[0];
    for (double& v : t.grad_buffer(a).data()) v += gv;
  });
}

/// Column-wise mean of a matrix's rows.
inline Var mean_rows(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.dim(0) == 0) throw ShapeError("mean_rows: needs a non-empty matrix");
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out(Shape{c}, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
  for (double& v : out.data()) v /= static_cast<double>(r);
  return a.tape().record("mean_rows", std::move(out), {a}, [a, r, c](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    auto& ga = t.grad_buffer(a);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j] * inv;
  });
}

// ---------------------------------------------------------------------------
// Softmax

/// Softmax of a vector, or of each row of a matrix. Max-subtracted.
inline Var softmax_rows(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || xv.rank() > 2) throw ShapeError("softmax_rows: needs a vector or matrix");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    double mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  Tensor saved = out;
  return x.tape().record("softmax_rows", std::move(out), {x},
                         [x, saved = std::move(saved), rows, cols](Tape& t, const Tensor& g) {
                           if (!t.requires_grad(x)) return;
                           auto& gx = t.grad_buffer(x);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const std::size_t o = r * cols;
                             double dot = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * saved[o + c];
                             for (std::size_t c = 0; c < cols; ++c)
                               gx[o + c] += saved[o + c] * (g[o + c] - dot);
                           }
                         });
}

}  // namespace algnet
