#pragma once

// Patient representation: per-visit code embeddings, a multi-head
// self-attention branch and a recurrent branch over the visit sequence,
// their weighted sum, and the transform that fuses diagnosis and procedure
// streams into the patient state a^t.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "algnet/autodiff.hpp"
#include "algnet/ehr_data.hpp"
#include "algnet/recurrent.hpp"

namespace algnet {

enum class CodeField { Diagnosis, Procedure, Medication };

inline const std::vector<std::size_t>& codes_of(const Visit& v, CodeField f) {
  switch (f) {
    case CodeField::Diagnosis: return v.diag;
    case CodeField::Procedure: return v.proc;
    case CodeField::Medication: return v.med;
  }
  return v.diag;
}

/// One summed code embedding per visit.
inline std::vector<Var> embed_visits(Var table, std::span<const Visit> visits, CodeField field) {
  if (visits.empty()) throw Error("embed_visits: no visits");
  std::vector<Var> out;
  out.reserve(visits.size());
  for (const Visit& v : visits) {
    const auto& codes = codes_of(v, field);
    if (codes.empty() && field != CodeField::Medication) {
      throw DataError("embed_visits: empty diagnosis/procedure set");
    }
    out.push_back(embedding_sum(table, codes));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head self-attention

enum class Pooling { Last, Mean };

/// wq, wk, wv: dim x (heads*head_dim); wo: (heads*head_dim) x dim;
/// proj_w/proj_b: the dim -> dim output layer.
struct AttentionWeights {
  Var wq, wk, wv, wo;
  Var proj_w, proj_b;
  std::size_t heads = 8;
  std::size_t head_dim = 64;
};

/// Per-head attention weights from the last forward (values only).
struct AttentionTrace {
  std::vector<Tensor> weights;  // one per head: [t] for Last, [t x t] for Mean
};

/// Query/key/value rows of each position seen so far. Positions are
/// projected once and reused, so the encoder can run incrementally over a
/// patient's visits.
struct AttentionCache {
  std::vector<Var> q, k, v;

  std::size_t length() const noexcept { return k.size(); }

  void append(Var e, const AttentionWeights& w) {
    q.push_back(matmul(e, w.wq));
    k.push_back(matmul(e, w.wk));
    v.push_back(matmul(e, w.wv));
  }
};

/// Scaled dot-product attention per head over the cached positions, heads
/// concatenated and projected by W^O, then the output layer. `Last` returns
/// the final position's output, `Mean` averages over positions.
inline Var attention_readout(const AttentionCache& cache, const AttentionWeights& w,
                             Pooling pooling, AttentionTrace* trace = nullptr) {
  const std::size_t t = cache.length();
  if (t == 0) throw Error("mhsa_forward: empty sequence");
  const std::size_t dk = w.head_dim;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Var keys = stack_rows(cache.k);
  Var values = stack_rows(cache.v);
  if (trace) trace->weights.clear();

  std::vector<Var> heads;
  heads.reserve(w.heads);
  if (pooling == Pooling::Last) {
    Var q = cache.q.back();
    for (std::size_t h = 0; h < w.heads; ++h) {
      Var kh = slice_cols(keys, h * dk, dk);
      Var vh = slice_cols(values, h * dk, dk);
      Var weights = softmax_rows(scale(matmul(kh, slice_cols(q, h * dk, dk)), inv_sqrt_dk));
      if (trace) trace->weights.push_back(weights.value());
      heads.push_back(matmul(weights, vh));
    }
    Var mixed = matmul(concat(heads, 0), w.wo);
    return affine(mixed, w.proj_w, w.proj_b);
  }

  Var queries = stack_rows(cache.q);
  for (std::size_t h = 0; h < w.heads; ++h) {
    Var qh = slice_cols(queries, h * dk, dk);
    Var kh = slice_cols(keys, h * dk, dk);
    Var vh = slice_cols(values, h * dk, dk);
    Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dk));
    if (trace) trace->weights.push_back(weights.value());
    heads.push_back(matmul(weights, vh));
  }
  Var mixed = mean_rows(matmul(concat(heads, 1), w.wo));
  return affine(mixed, w.proj_w, w.proj_b);
}

/// Self-attention encoding s of a t x dim visit sequence.
inline Var mhsa_forward(std::span<const Var> seq, const AttentionWeights& w,
                        Pooling pooling = Pooling::Last, AttentionTrace* trace = nullptr) {
  if (seq.empty()) throw Error("mhsa_forward: empty sequence");
  AttentionCache cache;
  for (const Var& e : seq) cache.append(e, w);
  return attention_readout(cache, w, pooling, trace);
}

inline Var mhsa_forward(Var seq, const AttentionWeights& w, Pooling pooling = Pooling::Last,
                        AttentionTrace* trace = nullptr) {
  const Tensor& sv = seq.value();
  if (sv.rank() != 2 || sv.dim(0) == 0) throw Error("mhsa_forward: expected a non-empty t x dim matrix");
  std::vector<Var> rows;
  for (std::size_t i = 0; i < sv.dim(0); ++i) rows.push_back(row(seq, i));
  return mhsa_forward(rows, w, pooling, trace);
}

// ---------------------------------------------------------------------------
// Recurrent branch

inline Var zeros_var(Tape& tape, std::size_t n) { return tape.constant(Tensor(Shape{n}, 0.0)); }

/// Final hidden state of a GRU run from a zero state.
inline Var gru_forward(std::span<const Var> seq, const GruWeights& w) {
  if (seq.empty()) throw Error("gru_forward: empty sequence");
  Var h = zeros_var(seq[0].tape(), w.uz.value().dim(0));
  for (const Var& x : seq) h = gru_cell(x, h, w);
  return h;
}

inline Var lstm_forward(std::span<const Var> seq, const LstmWeights& w) {
  if (seq.empty()) throw Error("lstm_forward: empty sequence");
  const std::size_t n = w.ui.value().dim(0);
  LstmState s{zeros_var(seq[0].tape(), n), zeros_var(seq[0].tape(), n)};
  for (const Var& x : seq) s = lstm_cell(x, s, w);
  return s.h;
}

// ---------------------------------------------------------------------------
// Fusion

/// PRE = l + gamma * s. Either branch may be absent (ablation variants).
inline Var pre_combine(std::optional<Var> l, std::optional<Var> s, double gamma) {
  if (l && s) {
    detail::require_same_shape("pre_combine", l->value(), s->value());
    return add(*l, scale(*s, gamma));
  }
  if (l) return *l;
  if (s) return scale(*s, gamma);
  throw Error("pre_combine: both branches disabled");
}

/// a^t = tanh([pre_d, pre_p] W + b).
inline Var fuse_patient_state(Var pre_d, Var pre_p, Var w, Var b) {
  return tanh(affine(concat({pre_d, pre_p}, 0), w, b));
}

}  // namespace algnet
