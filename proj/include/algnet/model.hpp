#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "algnet/config.hpp"
#include "algnet/ehr_data.hpp"
#include "algnet/lgc_memory.hpp"
#include "algnet/losses.hpp"
#include "algnet/memory_readout.hpp"
#include "algnet/patient_encoder.hpp"
#include "algnet/recurrent.hpp"

namespace algnet {

struct ModelSizes {
  std::size_t n_diag = 0;
  std::size_t n_proc = 0;
  std::size_t n_med = 0;

  static ModelSizes of(const CodeVocab& v) { return {v.diag.size(), v.proc.size(), v.med.size()}; }
};

/// Graph inputs shared by every forward pass over one dataset.
struct GraphInputs {
  AdjacencyMatrix ehr;
  AdjacencyMatrix ddi;
  Tensor ehr_norm;      // LGC propagation matrices
  Tensor ddi_norm;
  Tensor ehr_gcn_norm;  // with self-loops, for the GCN arm
  Tensor ddi_gcn_norm;
  Tensor ddi_dense;

  static GraphInputs build(AdjacencyMatrix ehr, AdjacencyMatrix ddi) {
    if (ehr.size != ddi.size) throw ShapeError("EHR and DDI graphs differ in size");
    GraphInputs g;
    g.ehr_norm = normalize_adjacency(ehr).matrix;
    g.ddi_norm = normalize_adjacency(ddi).matrix;
    g.ehr_gcn_norm = normalize_with_self_loops(ehr).matrix;
    g.ddi_gcn_norm = normalize_with_self_loops(ddi).matrix;
    g.ddi_dense = ddi.to_tensor();
    g.ehr = std::move(ehr);
    g.ddi = std::move(ddi);
    return g;
  }
};

/// Registers every parameter group in a fixed order, whatever the variant,
/// so all variants share a layout and, for one seed, the same initial values.
/// Weights and embeddings are uniform in [-1/sqrt(dim), 1/sqrt(dim)], biases
/// zero.
inline ParamStore init_params(const TrainConfig& cfg, const ModelSizes& sizes) {
  cfg.validate();
  if (sizes.n_diag == 0 || sizes.n_proc == 0 || sizes.n_med == 0) {
    throw ConfigError("model sizes must be positive");
  }
  const std::size_t d = cfg.dim, dm = cfg.model_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(cfg.seed);
  ParamStore p;
  auto weight = [&](const std::string& name, Shape shape) {
    p.add(name, uniform_tensor(std::move(shape), bound, rng));
  };
  auto bias = [&](const std::string& name, std::size_t n) { p.add(name, Tensor(Shape{n}, 0.0)); };

  weight("emb.diag", {sizes.n_diag, d});
  weight("emb.proc", {sizes.n_proc, d});
  weight("emb.med", {sizes.n_med, d});
  for (const std::string m : {"diag", "proc"}) {
    weight(m + ".attn.wq", {d, dm});
    weight(m + ".attn.wk", {d, dm});
    weight(m + ".attn.wv", {d, dm});
    weight(m + ".attn.wo", {dm, d});
    weight(m + ".attn.proj_w", {d, d});
    bias(m + ".attn.proj_b", d);
    for (const char* g : {"z", "r", "c"}) {
      weight(m + ".gru.w" + g, {d, d});
      weight(m + ".gru.u" + g, {d, d});
      bias(m + ".gru.b" + g, d);
    }
    for (const char* g : {"i", "f", "o", "g"}) {
      weight(m + ".lstm.w" + g, {d, d});
      weight(m + ".lstm.u" + g, {d, d});
      bias(m + ".lstm.b" + g, d);
    }
  }
  for (const std::string graph : {"ehr", "ddi"}) {
    for (std::size_t k = 0; k < cfg.lgc_layers; ++k) weight("gcn." + graph + ".w" + std::to_string(k), {d, d});
  }
  weight("fuse.w", {2 * d, d});
  bias("fuse.b", d);
  weight("head.w", {3 * d, sizes.n_med});
  bias("head.b", sizes.n_med);
  return p;
}

/// Parameter group of a name, for grad-check reporting.
inline std::string param_group(const std::string& name) {
  if (name == "emb.med") return "lgc_base_embedding";
  if (name.rfind("emb.", 0) == 0) return "embeddings";
  if (name.find(".attn.") != std::string::npos) return "attention";
  if (name.find(".gru.") != std::string::npos) return "gru";
  if (name.find(".lstm.") != std::string::npos) return "lstm";
  if (name.rfind("gcn.", 0) == 0) return "gcn";
  if (name.rfind("fuse.", 0) == 0) return "fusion";
  if (name.rfind("head.", 0) == 0) return "prediction_head";
  return "other";
}

struct VisitOutput {
  Var logits;
  Var probs;
  Var state;  // a^t
  Var o_b;
  Var o_d;
};

struct LossParts {
  double total = 0.0;
  double bce = 0.0;
  double mll = 0.0;
  double interaction = 0.0;
  std::size_t visits = 0;

  LossParts& operator+=(const LossParts& o) {
    total += o.total;
    bce += o.bce;
    mll += o.mll;
    interaction += o.interaction;
    visits += o.visits;
    return *this;
  }
};

class AlgNet {
 public:
  AlgNet(TrainConfig cfg, ModelSizes sizes, ParamStore params)
      : cfg_(std::move(cfg)), sizes_(sizes), params_(std::move(params)) {
    cfg_.validate();
  }

  static AlgNet initialize(const TrainConfig& cfg, const ModelSizes& sizes) {
    return AlgNet(cfg, sizes, init_params(cfg, sizes));
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  const ModelSizes& sizes() const noexcept { return sizes_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Memory graph M for the current parameters.
  Var memory_graph(Tape& tape, const GraphInputs& g) {
    Var e0 = tape.param(params_, "emb.med");
    const auto& tr = traits(cfg_.variant);
    if (tr.graph == GraphLayer::Lgc) {
      auto embed = [&](const Tensor& norm) {
        auto layers = lgc_propagate(tape.constant(norm), e0, cfg_.lgc_layers);
        return combine_layers(layers, cfg_.alpha, cfg_.include_layer0 ? &e0 : nullptr);
      };
      return build_memory_graph(embed(g.ehr_norm), embed(g.ddi_norm), cfg_.beta);
    }
    auto embed = [&](const Tensor& norm, const std::string& graph) {
      std::vector<Var> ws;
      for (std::size_t k = 0; k < cfg_.lgc_layers; ++k)
        ws.push_back(tape.param(params_, "gcn." + graph + ".w" + std::to_string(k)));
      return gcn_propagate(tape.constant(norm), e0, ws);
    };
    return build_memory_graph(embed(g.ehr_gcn_norm, "ehr"), embed(g.ddi_gcn_norm, "ddi"), cfg_.beta);
  }

  /// Runs visits [0, upto) of one patient with a fresh visited history.
  std::vector<VisitOutput> forward_patient(Tape& tape, const PatientRecord& rec,
                                           const GraphInputs& g,
                                           std::optional<std::size_t> upto = std::nullopt) {
    const std::size_t n = std::min(upto.value_or(rec.visits.size()), rec.visits.size());
    const auto& tr = traits(cfg_.variant);
    Var memory = memory_graph(tape, g);

    struct Stream {
      Var table;
      AttentionWeights attn;
      GruWeights gru;
      LstmWeights lstm;
      AttentionCache cache;
      Var h;
      LstmState lstm_state;
      CodeField field;
    };
    auto make_stream = [&](const std::string& m, CodeField field, const char* table) {
      Stream s;
      s.field = field;
      s.table = tape.param(params_, table);
      if (tr.attention) {
        s.attn = {P(tape, m + ".attn.wq"), P(tape, m + ".attn.wk"), P(tape, m + ".attn.wv"),
                  P(tape, m + ".attn.wo"), P(tape, m + ".attn.proj_w"),
                  P(tape, m + ".attn.proj_b"), cfg_.heads, cfg_.dim};
      }
      if (tr.sequence == SequenceBranch::Gru) {
        s.gru = {P(tape, m + ".gru.wz"), P(tape, m + ".gru.uz"), P(tape, m + ".gru.bz"),
                 P(tape, m + ".gru.wr"), P(tape, m + ".gru.ur"), P(tape, m + ".gru.br"),
                 P(tape, m + ".gru.wc"), P(tape, m + ".gru.uc"), P(tape, m + ".gru.bc")};
        s.h = zeros_var(tape, cfg_.dim);
      } else if (tr.sequence == SequenceBranch::Lstm) {
        s.lstm = {P(tape, m + ".lstm.wi"), P(tape, m + ".lstm.ui"), P(tape, m + ".lstm.bi"),
                  P(tape, m + ".lstm.wf"), P(tape, m + ".lstm.uf"), P(tape, m + ".lstm.bf"),
                  P(tape, m + ".lstm.wo"), P(tape, m + ".lstm.uo"), P(tape, m + ".lstm.bo"),
                  P(tape, m + ".lstm.wg"), P(tape, m + ".lstm.ug"), P(tape, m + ".lstm.bg")};
        s.lstm_state = {zeros_var(tape, cfg_.dim), zeros_var(tape, cfg_.dim)};
      }
      return s;
    };
    Stream streams[2] = {make_stream("diag", CodeField::Diagnosis, "emb.diag"),
                         make_stream("proc", CodeField::Procedure, "emb.proc")};
    Var fuse_w = P(tape, "fuse.w"), fuse_b = P(tape, "fuse.b");
    Var head_w = P(tape, "head.w"), head_b = P(tape, "head.b");

    VisitedHistory history;
    std::vector<VisitOutput> out;
    out.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      const Visit& visit = rec.visits[t];
      Var pre[2];
      for (int k = 0; k < 2; ++k) {
        Stream& s = streams[k];
        const auto& codes = codes_of(visit, s.field);
        if (codes.empty()) throw DataError("patient " + rec.id + ": visit with empty code set");
        Var e = embedding_sum(s.table, codes);
        std::optional<Var> l, att;
        if (tr.sequence == SequenceBranch::Gru) {
          s.h = gru_cell(e, s.h, s.gru);
          l = s.h;
        } else if (tr.sequence == SequenceBranch::Lstm) {
          s.lstm_state = lstm_cell(e, s.lstm_state, s.lstm);
          l = s.lstm_state.h;
        }
        if (tr.attention) {
          s.cache.append(e, s.attn);
          att = attention_readout(s.cache, s.attn, cfg_.pooling);
        }
        pre[k] = pre_combine(l, att, cfg_.gamma);
      }
      Var a = fuse_patient_state(pre[0], pre[1], fuse_w, fuse_b);
      Var o_b = read_memory_bank(memory, a);
      Var o_d = read_dynamic_memory(memory, history, a);
      Prediction pred = predict(a, o_b, o_d, head_w, head_b);
      out.push_back({pred.logits, pred.probs, a, o_b, o_d});

      if (cfg_.teacher_forcing) {
        history.insert(a, multi_hot(visit.med, sizes_.n_med));
      } else {
        const auto guess = threshold_set(pred.probs.value().data(), cfg_.threshold);
        history.insert(a, multi_hot(guess, sizes_.n_med));
      }
    }
    return out;
  }

  /// Loss of one visit given its forward output.
  Var visit_loss(const VisitOutput& v, const Visit& visit, const GraphInputs& g, LossParts* parts) {
    Var bce = loss_bce(v.logits, multi_hot(visit.med, sizes_.n_med));
    Var mll = loss_mll(v.probs, visit.med, cfg_.threshold);
    Var inter = loss_interaction(v.probs, g.ddi_dense);
    const LossWeights w = cfg_.loss_weights();
    Var total = loss_total(bce, mll, w, &inter);
    if (parts) {
      parts->bce += bce.value().item();
      parts->mll += mll.value().item();
      parts->interaction += inter.value().item();
      parts->total += total.value().item();
      ++parts->visits;
    }
    return total;
  }

  /// Summed loss over a patient's visits.
  Var patient_loss(Tape& tape, const PatientRecord& rec, const GraphInputs& g,
                   LossParts* parts = nullptr) {
    auto outs = forward_patient(tape, rec, g);
    std::vector<Var> terms;
    terms.reserve(outs.size());
    for (std::size_t t = 0; t < outs.size(); ++t) terms.push_back(visit_loss(outs[t], rec.visits[t], g, parts));
    return add_n(terms);
  }

 private:
  Var P(Tape& tape, const std::string& name) { return tape.param(params_, name); }

  TrainConfig cfg_;
  ModelSizes sizes_;
  ParamStore params_;
};

}  // namespace algnet
