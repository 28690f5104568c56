#pragma once

#include <string>

#include "algnet/autodiff.hpp"

namespace algnet {

/// x * W + b with x a vector (row convention).
inline Var affine(Var x, Var w, Var b) { return add(matmul(x, w), b); }

/// GRU gate weights. Inputs multiply from the left: x[in] * w[in x H].
struct GruWeights {
  Var wz, uz, bz;  // update gate
  Var wr, ur, br;  // reset gate
  Var wc, uc, bc;  // candidate
};

namespace detail {
inline void check_cell_dims(std::string_view cell, Var x, Var h, Var w, Var u) {
  const Tensor& xv = x.value();
  const Tensor& hv = h.value();
  if (xv.rank() != 1 || hv.rank() != 1 || w.value().rank() != 2 || u.value().rank() != 2 ||
      xv.size() != w.value().dim(0) || hv.size() != u.value().dim(0) ||
      hv.size() != u.value().dim(1) || hv.size() != w.value().dim(1)) {
    throw ShapeError(std::string(cell) + ": input " + to_string(xv.shape()) + ", state " +
                     to_string(hv.shape()) + " do not fit weights " +
                     to_string(w.value().shape()) + " / " + to_string(u.value().shape()));
  }
}
}  // namespace detail

/// One GRU step:
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   c = tanh(x Wc + (r * h) Uc + bc)
///   h' = (1 - z) * h + z * c
inline Var gru_cell(Var x, Var h, const GruWeights& w) {
  detail::check_cell_dims("gru_cell", x, h, w.wz, w.uz);
  Var z = sigmoid(add(affine(x, w.wz, w.bz), matmul(h, w.uz)));
  Var r = sigmoid(add(affine(x, w.wr, w.br), matmul(h, w.ur)));
  Var c = tanh(add(affine(x, w.wc, w.bc), matmul(mul(r, h), w.uc)));
  // h + z * (c - h)  ==  (1 - z) * h + z * c
  return add(h, mul(z, sub(c, h)));
}

struct LstmWeights {
  Var wi, ui, bi;  // input gate
  Var wf, uf, bf;  // forget gate
  Var wo, uo, bo;  // output gate
  Var wg, ug, bg;  // cell candidate
};

struct LstmState {
  Var h;
  Var c;
};

inline LstmState lstm_cell(Var x, LstmState s, const LstmWeights& w) {
  detail::check_cell_dims("lstm_cell", x, s.h, w.wi, w.ui);
  Var i = sigmoid(add(affine(x, w.wi, w.bi), matmul(s.h, w.ui)));
  Var f = sigmoid(add(affine(x, w.wf, w.bf), matmul(s.h, w.uf)));
  Var o = sigmoid(add(affine(x, w.wo, w.bo), matmul(s.h, w.uo)));
  Var g = tanh(add(affine(x, w.wg, w.bg), matmul(s.h, w.ug)));
  Var c = add(mul(f, s.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

}  // namespace algnet
