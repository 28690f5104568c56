#pragma once

// End-to-end finite-difference check on a tiny synthetic instance: three
// patients, 8 diagnoses, 5 procedures, 6 medications, dim 8, 2 heads.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "algnet/grad_check.hpp"
#include "algnet/model.hpp"
#include "algnet/synth.hpp"

namespace algnet {

struct GroupError {
  std::string group;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct ToyGradCheck {
  GradCheckReport report;
  std::vector<GroupError> groups;  // in parameter-registration order

  bool passed() const { return report.passed(); }
};

inline SynthConfig toy_synth_config(std::uint64_t seed) {
  SynthConfig s;
  s.patients = 3;
  s.n_diag = 8;
  s.n_proc = 5;
  s.n_med = 6;
  s.min_visits = 2;
  s.max_visits = 3;
  s.min_pool = 2;
  s.max_pool = 3;
  s.max_meds_per_diag = 2;
  s.ddi_edges = 2;
  s.seed = seed;
  return s;
}

inline TrainConfig toy_train_config(std::uint64_t seed, Variant variant = Variant::ALGNET) {
  TrainConfig c;
  c.dim = 8;
  c.heads = 2;
  c.seed = seed;
  c.variant = variant;
  c.w_ddi = 0.1;
  return c;
}

/// Groups with no path to the loss for `variant` (LSTM under a GRU variant,
/// GCN weights under LGC, ...) are skipped.
inline ToyGradCheck run_toy_gradcheck(std::uint64_t seed, Variant variant = Variant::ALGNET,
                                      GradCheckOptions opts = {}) {
  const SynthCorpus corpus = synth_generate(toy_synth_config(seed));
  const ModelSizes sizes = ModelSizes::of(corpus.vocab);
  const GraphInputs graphs = GraphInputs::build(build_ehr_adjacency(corpus.records, sizes.n_med),
                                                ddi_from_pairs(corpus.ddi_edges, sizes.n_med));
  const TrainConfig cfg = toy_train_config(seed, variant);
  AlgNet model = AlgNet::initialize(cfg, sizes);
  const auto& tr = traits(variant);

  if (!opts.filter) {
    opts.filter = [&tr](const std::string& name) {
      const std::string g = param_group(name);
      if (g == "attention") return tr.attention;
      if (g == "gru") return tr.sequence == SequenceBranch::Gru;
      if (g == "lstm") return tr.sequence == SequenceBranch::Lstm;
      if (g == "gcn") return tr.graph == GraphLayer::Gcn;
      return true;
    };
  }
  const LossClosure loss = [&](Tape& tape, ParamStore&) {
    std::vector<Var> terms;
    for (const auto& rec : corpus.records) terms.push_back(model.patient_loss(tape, rec, graphs));
    return add_n(terms);
  };

  ToyGradCheck out;
  out.report = grad_check(loss, model.params(), opts);
  std::map<std::string, std::size_t> slot;
  for (const auto& e : out.report.entries) {
    const std::string g = param_group(e.name);
    auto [it, fresh] = slot.try_emplace(g, out.groups.size());
    if (fresh) out.groups.push_back({g});
    GroupError& ge = out.groups[it->second];
    ge.checked += e.checked;
    ge.max_rel_error = std::max(ge.max_rel_error, e.max_rel_error);
    ge.passed = ge.passed && e.passed;
  }
  return out;
}

}  // namespace algnet
