#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "algnet/autodiff.hpp"
#include "algnet/recurrent.hpp"

namespace algnet {

/// Multi-hot vector of length n with ones at `indices`.
inline Tensor multi_hot(std::span<const std::size_t> indices, std::size_t n) {
  Tensor t(Shape{n}, 0.0);
  for (std::size_t i : indices) {
    if (i >= n) throw Error("multi_hot: index " + std::to_string(i) + " out of range");
    t[i] = 1.0;
  }
  return t;
}

/// Per-patient key/value memory of earlier visits: keys are patient states
/// a^i, values the medication multi-hots m^i.
class VisitedHistory {
 public:
  bool empty() const noexcept { return keys_.empty(); }
  std::size_t size() const noexcept { return keys_.size(); }
  const std::vector<Var>& keys() const noexcept { return keys_; }
  const std::vector<Tensor>& values() const noexcept { return values_; }

  void insert(Var key, Tensor value) {
    if (!keys_.empty()) {
      if (key.value().shape() != keys_.front().value().shape() ||
          value.shape() != values_.front().shape()) {
        throw ShapeError("history_insert: entry shape differs from earlier entries");
      }
    }
    for (double v : value.data()) {
      if (v != 0.0 && v != 1.0) throw Error("history_insert: value must be 0/1 multi-hot");
    }
    keys_.push_back(key);
    values_.push_back(std::move(value));
  }

  void reset() {
    keys_.clear();
    values_.clear();
  }

 private:
  std::vector<Var> keys_;
  std::vector<Tensor> values_;
};

/// o_b = M^T softmax(M a).
inline Var read_memory_bank(Var memory, Var state) {
  Var w = softmax_rows(matmul(memory, state));
  return matmul(w, memory);
}

struct DynamicReadout {
  Var output;        // o_d
  Var med_weights;   // u = H_v^T softmax(H_k a); invalid when history is empty
  Var visit_weights; // softmax(H_k a); invalid when history is empty
};

/// o_d = M^T H_v^T softmax(H_k a), or the zero vector when H is empty.
inline DynamicReadout read_dynamic_memory_detailed(Var memory, const VisitedHistory& history,
                                                   Var state) {
  const std::size_t dim = memory.value().dim(1);
  if (history.empty()) return {memory.tape().constant(Tensor(Shape{dim}, 0.0)), {}, {}};
  Tape& tape = memory.tape();
  Var keys = stack_rows(history.keys());
  const std::size_t n_med = history.values().front().size();
  Tensor hv(Shape{history.size(), n_med});
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto src = history.values()[i].data();
    std::copy(src.begin(), src.end(), hv.data().begin() + static_cast<std::ptrdiff_t>(i * n_med));
  }
  Var w = softmax_rows(matmul(keys, state));
  Var u = matmul(w, tape.constant(std::move(hv)));
  return {matmul(u, memory), u, w};
}

inline Var read_dynamic_memory(Var memory, const VisitedHistory& history, Var state) {
  return read_dynamic_memory_detailed(memory, history, state).output;
}

struct Prediction {
  Var logits;
  Var probs;
};

/// z = [a, o_b, o_d] W + b; probabilities are sigmoid(z).
inline Prediction predict(Var state, Var o_b, Var o_d, Var w, Var b) {
  Var z = affine(concat({state, o_b, o_d}, 0), w, b);
  return {z, sigmoid(z)};
}

}  // namespace algnet
