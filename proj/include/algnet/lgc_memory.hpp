#pragma once

// Light graph convolution over the medication graphs and the memory graph
// built from it. Also the weighted, ReLU graph convolution used by the
// "without LGC" ablation arm.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "algnet/autodiff.hpp"
#include "algnet/ehr_data.hpp"

namespace algnet {

/// D^-1/2 A D^-1/2 as a dense |C_m| x |C_m| tensor.
struct NormalizedAdjacency {
  std::size_t size = 0;
  Tensor matrix;
};

/// Ã[i][j] = A[i][j] / sqrt(d_i d_j). Nodes with zero degree get zero rows and
/// columns.
inline NormalizedAdjacency normalize_adjacency(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) {
    throw ShapeError("normalize_adjacency: needs a square matrix, got " + to_string(a.shape()));
  }
  const std::size_t n = a.dim(0);
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = a.at(i, j);
      if (v != a.at(j, i)) throw DataError("normalize_adjacency: input is not symmetric");
      if (v < 0.0) throw DataError("normalize_adjacency: negative entry");
      d += v;
    }
    deg[i] = d;
  }
  NormalizedAdjacency out{n, Tensor(Shape{n, n}, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a.at(i, j) != 0.0) out.matrix.at(i, j) = a.at(i, j) / std::sqrt(deg[i] * deg[j]);
  return out;
}

inline NormalizedAdjacency normalize_adjacency(const AdjacencyMatrix& a) {
  a.validate();
  return normalize_adjacency(a.to_tensor());
}

/// Normalisation of A + I, the usual GCN propagation matrix.
inline NormalizedAdjacency normalize_with_self_loops(const AdjacencyMatrix& a) {
  a.validate();
  Tensor t = a.to_tensor();
  for (std::size_t i = 0; i < a.size; ++i) t.at(i, i) += 1.0;
  return normalize_adjacency(t);
}

/// E^{k+1} = Ã E^k for k = 0..layers-1. Returns E^1..E^layers.
inline std::vector<Var> lgc_propagate(Var norm_adj, Var e0, std::size_t layers = 2) {
  const Tensor& av = norm_adj.value();
  const Tensor& ev = e0.value();
  if (av.rank() != 2 || ev.rank() != 2 || av.dim(0) != av.dim(1) || av.dim(1) != ev.dim(0)) {
    throw ShapeError("lgc_propagate: adjacency " + to_string(av.shape()) +
                     " does not fit embeddings " + to_string(ev.shape()));
  }
  std::vector<Var> out;
  Var e = e0;
  for (std::size_t k = 0; k < layers; ++k) {
    e = matmul(norm_adj, e);
    out.push_back(e);
  }
  return out;
}

/// alpha * (E^1 + ... + E^K), with alpha * E^0 added when `layer0` is given.
inline Var combine_layers(std::span<const Var> layers, double alpha, const Var* layer0 = nullptr) {
  if (layers.empty()) throw Error("combine_layers: no layers");
  std::vector<Var> terms;
  if (layer0) terms.push_back(*layer0);
  terms.insert(terms.end(), layers.begin(), layers.end());
  for (const Var& t : terms) detail::require_same_shape("combine_layers", t.value(), terms[0].value());
  return scale(add_n(terms), alpha);
}

/// M = E_ehr + beta * E_ddi.
inline Var build_memory_graph(Var e_ehr, Var e_ddi, double beta) {
  detail::require_same_shape("build_memory_graph", e_ehr.value(), e_ddi.value());
  return add(e_ehr, scale(e_ddi, beta));
}

/// E^{k+1} = ReLU(Ã_sl E^k W_k); returns the last layer.
inline Var gcn_propagate(Var norm_adj_self_loops, Var e, std::span<const Var> weights) {
  const Tensor& av = norm_adj_self_loops.value();
  if (av.rank() != 2 || e.value().rank() != 2 || av.dim(1) != e.value().dim(0)) {
    throw ShapeError("gcn_propagate: adjacency " + to_string(av.shape()) +
                     " does not fit embeddings " + to_string(e.value().shape()));
  }
  for (const Var& w : weights) e = relu(matmul(matmul(norm_adj_self_loops, e), w));
  return e;
}

}  // namespace algnet
