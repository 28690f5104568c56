#pragma once

// Training loop, evaluation, and the ablation grid.

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "algnet/adam.hpp"
#include "algnet/config.hpp"
#include "algnet/metrics.hpp"
#include "algnet/model.hpp"

namespace algnet {

class TrainingError : public Error {
 public:
  using Error::Error;
};

struct PreparedData {
  CodeVocab vocab;
  ModelSizes sizes;
  DatasetSplit split;
  GraphInputs graphs;
};

/// Splits by patient and builds A_e from the training part only.
inline PreparedData prepare_data(const TrainConfig& cfg, CodeVocab vocab,
                                 const std::vector<PatientRecord>& records, AdjacencyMatrix ddi) {
  PreparedData d;
  d.sizes = ModelSizes::of(vocab);
  d.vocab = std::move(vocab);
  if (ddi.size != d.sizes.n_med) throw DataError("DDI graph size does not match medication vocab");
  d.split = split_dataset(records, cfg.seed, cfg.split);
  d.graphs = GraphInputs::build(build_ehr_adjacency(d.split.train, d.sizes.n_med), std::move(ddi));
  return d;
}

// ---------------------------------------------------------------------------
// Evaluation

using PatientEvals = std::vector<std::vector<VisitEval>>;

/// Teacher-forced visit loop over `records`, collecting per-visit evals.
inline PatientEvals predict_records(AlgNet& model, const std::vector<PatientRecord>& records,
                                    const GraphInputs& graphs) {
  PatientEvals out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    Tape tape;
    auto outs = model.forward_patient(tape, rec, graphs);
    std::vector<VisitEval> evals;
    for (std::size_t t = 0; t < outs.size(); ++t) {
      const auto p = outs[t].probs.value().data();
      evals.push_back(make_visit_eval(rec.visits[t].med, {p.begin(), p.end()},
                                      model.config().threshold));
    }
    out.push_back(std::move(evals));
  }
  return out;
}

inline std::vector<VisitEval> flatten(const PatientEvals& evals) {
  std::vector<VisitEval> flat;
  for (const auto& p : evals) flat.insert(flat.end(), p.begin(), p.end());
  return flat;
}

struct MetricSpread {
  double mean = 0.0;
  double std = 0.0;

  bool operator==(const MetricSpread&) const = default;
};

struct MetricsReport {
  MetricValues value;  // on the full split
  std::size_t bootstrap_rounds = 0;
  MetricSpread ddi_rate, jaccard, f1, pr_auc, avg_drugs;  // across bootstrap rounds
  std::size_t patients = 0;
  std::size_t visits = 0;

  bool operator==(const MetricsReport&) const = default;
};

inline MetricSpread spread(const std::vector<double>& xs) {
  MetricSpread s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(v / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// Metrics over all visits, plus mean/std over patient-level bootstrap
/// resamples (seeded, so the report is reproducible).
inline MetricsReport summarize(const PatientEvals& evals, const AdjacencyMatrix& ddi,
                               std::size_t rounds, std::uint64_t seed) {
  MetricsReport r;
  const auto flat = flatten(evals);
  r.value = compute_metrics(flat, ddi);
  r.patients = evals.size();
  r.visits = flat.size();
  r.bootstrap_rounds = rounds;
  if (rounds == 0 || evals.empty()) return r;
  Rng rng(seed ^ 0xb007b007ULL);
  std::vector<double> dr, ja, f, pa, ad;
  for (std::size_t b = 0; b < rounds; ++b) {
    std::vector<VisitEval> sample;
    for (std::size_t i = 0; i < evals.size(); ++i) {
      const auto& p = evals[rng.below(evals.size())];
      sample.insert(sample.end(), p.begin(), p.end());
    }
    const auto m = compute_metrics(sample, ddi);
    dr.push_back(m.ddi_rate);
    ja.push_back(m.jaccard);
    f.push_back(m.f1);
    pa.push_back(m.pr_auc);
    ad.push_back(m.avg_drugs);
  }
  r.ddi_rate = spread(dr);
  r.jaccard = spread(ja);
  r.f1 = spread(f);
  r.pr_auc = spread(pa);
  r.avg_drugs = spread(ad);
  return r;
}

inline MetricsReport evaluate(AlgNet& model, const std::vector<PatientRecord>& records,
                              const GraphInputs& graphs) {
  const auto& cfg = model.config();
  return summarize(predict_records(model, records, graphs), graphs.ddi, cfg.bootstrap_rounds,
                   cfg.seed);
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
  auto entry = [](double v, const MetricSpread& s) {
    return nlohmann::json{{"value", v}, {"mean", s.mean}, {"std", s.std}};
  };
  return {
      {"ddi_rate", entry(r.value.ddi_rate, r.ddi_rate)},
      {"jaccard", entry(r.value.jaccard, r.jaccard)},
      {"f1", entry(r.value.f1, r.f1)},
      {"pr_auc", entry(r.value.pr_auc, r.pr_auc)},
      {"avg_drugs", entry(r.value.avg_drugs, r.avg_drugs)},
      {"spread", "bootstrap over patients"},
      {"bootstrap_rounds", r.bootstrap_rounds},
      {"patients", r.patients},
      {"visits", r.visits},
  };
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  std::size_t epoch = 0;
  LossParts train;
  MetricValues val;
};

struct RunLog {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_jaccard = -1.0;
  std::size_t optimizer_steps = 0;
  MetricsReport test;

  nlohmann::json to_json() const {
    nlohmann::json ep = nlohmann::json::array();
    for (const auto& e : epochs) {
      ep.push_back({{"epoch", e.epoch},
                    {"loss", e.train.total},
                    {"bce", e.train.bce},
                    {"mll", e.train.mll},
                    {"ddi_loss", e.train.interaction},
                    {"val_jaccard", e.val.jaccard},
                    {"val_f1", e.val.f1},
                    {"val_pr_auc", e.val.pr_auc},
                    {"val_ddi_rate", e.val.ddi_rate},
                    {"val_avg_drugs", e.val.avg_drugs}});
    }
    return {{"config", config},         {"seed", seed},
            {"epochs", ep},             {"best_epoch", best_epoch},
            {"best_val_jaccard", best_val_jaccard}, {"optimizer_steps", optimizer_steps},
            {"test", report_to_json(test)}};
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "epoch,loss,bce,mll,ddi_loss,val_jaccard,val_f1,val_pr_auc,val_ddi_rate,val_avg_drugs\n";
    for (const auto& e : epochs) {
      os << e.epoch << ',' << e.train.total << ',' << e.train.bce << ',' << e.train.mll << ','
         << e.train.interaction << ',' << e.val.jaccard << ',' << e.val.f1 << ',' << e.val.pr_auc
         << ',' << e.val.ddi_rate << ',' << e.val.avg_drugs << '\n';
    }
    return os.str();
  }
};

struct TrainResult {
  AlgNet model;  // parameters of the best validation epoch
  RunLog log;
};

struct TrainOptions {
  std::ostream* progress = nullptr;
  // Called after every epoch with the current (not best) model.
  std::function<void(const EpochLog&, AlgNet&)> on_epoch;
};

/// Epoch loop: each training patient (in a seeded per-epoch order) runs its
/// visits with a fresh history; their losses are summed and one Adam step is
/// taken per patient (or per visit with step_per_visit). The parameters with
/// the best validation Jaccard are kept.
inline TrainResult train(const TrainConfig& cfg, const PreparedData& data,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  AlgNet model = AlgNet::initialize(cfg, data.sizes);
  AdamState adam(model.params(), cfg.adam());
  RunLog log;
  log.config = config_to_json(cfg);
  log.seed = cfg.seed;
  std::optional<ParamStore> best;
  const auto& train_set = data.split.train;
  const auto& graphs = data.graphs;

  auto check = [&](const LossParts& parts, std::size_t epoch, std::size_t order_idx,
                   std::size_t patient) {
    if (!std::isfinite(parts.total)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                          ", training patient index " + std::to_string(patient) + " (id " +
                          train_set[patient].id + ", step " + std::to_string(order_idx) + ")");
    }
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed * 1000003ULL + epoch);
    shuffle_rng.shuffle(order);

    EpochLog ep;
    ep.epoch = epoch;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t idx = order[k];
      const PatientRecord& rec = train_set[idx];
      try {
        if (!cfg.step_per_visit) {
          LossParts parts;
          model.params().zero_grad();
          Tape tape;
          Var loss = model.patient_loss(tape, rec, graphs, &parts);
          check(parts, epoch, k, idx);
          tape.backward(loss);
          adam.apply(model.params());
          ++log.optimizer_steps;
          ep.train += parts;
        } else {
          for (std::size_t t = 0; t < rec.visits.size(); ++t) {
            LossParts parts;
            model.params().zero_grad();
            Tape tape;
            auto outs = model.forward_patient(tape, rec, graphs, t + 1);
            Var loss = model.visit_loss(outs[t], rec.visits[t], graphs, &parts);
            check(parts, epoch, k, idx);
            tape.backward(loss);
            adam.apply(model.params());
            ++log.optimizer_steps;
            ep.train += parts;
          }
        }
      } catch (const NumericError& e) {
        throw TrainingError("non-finite value at epoch " + std::to_string(epoch) +
                            ", training patient index " + std::to_string(idx) + " (id " +
                            rec.id + "): " + e.what());
      }
    }

    ep.val = compute_metrics(flatten(predict_records(model, data.split.val, graphs)), graphs.ddi);
    if (ep.val.jaccard > log.best_val_jaccard) {
      log.best_val_jaccard = ep.val.jaccard;
      log.best_epoch = epoch;
      best = model.params();
    }
    if (opts.progress) {
      *opts.progress << "epoch " << epoch << "  loss " << ep.train.total << "  bce " << ep.train.bce
                     << "  mll " << ep.train.mll << "  ddi " << ep.train.interaction
                     << "  val_jaccard " << ep.val.jaccard << '\n';
    }
    if (opts.on_epoch) opts.on_epoch(ep, model);
    log.epochs.push_back(ep);
  }

  AlgNet best_model(cfg, data.sizes, best ? std::move(*best) : model.params());
  log.test = evaluate(best_model, data.split.test, graphs);
  return {std::move(best_model), std::move(log)};
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  Variant variant = Variant::ALGNET;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricValues> per_seed;  // test metrics of each run
  MetricSpread ddi_rate, jaccard, f1, pr_auc;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::string to_markdown() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "| Model | DDI Rate | Jaccard | PR-AUC | F1 Score |\n";
    os << "|---|---|---|---|---|\n";
    for (const auto& r : rows) {
      auto cell = [&](const MetricSpread& s) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(4) << s.mean << " ± " << s.std;
        return c.str();
      };
      os << "| " << traits(r.variant).display << " | " << cell(r.ddi_rate) << " | "
         << cell(r.jaccard) << " | " << cell(r.pr_auc) << " | " << cell(r.f1) << " |\n";
    }
    os << "\n± is the standard deviation across " << (rows.empty() ? 0 : rows[0].seeds.size())
       << " seeds.\n";
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "model,variant,ddi_rate,ddi_rate_std,jaccard,jaccard_std,pr_auc,pr_auc_std,f1,f1_std,seeds\n";
    for (const auto& r : rows) {
      os << '"' << traits(r.variant).display << "\"," << traits(r.variant).name << ','
         << r.ddi_rate.mean << ',' << r.ddi_rate.std << ',' << r.jaccard.mean << ','
         << r.jaccard.std << ',' << r.pr_auc.mean << ',' << r.pr_auc.std << ',' << r.f1.mean << ','
         << r.f1.std << ',' << r.seeds.size() << '\n';
    }
    return os.str();
  }
};

/// Builds the dataset for one seed (the split, and possibly the corpus,
/// depend on it).
using DataFactory = std::function<PreparedData(const TrainConfig&)>;

/// Trains every variant on every seed with otherwise identical settings and
/// reports test metrics as mean/std across seeds.
inline AblationTable run_ablation(const TrainConfig& base, const std::vector<Variant>& variants,
                                  const std::vector<std::uint64_t>& seeds,
                                  const DataFactory& data_for, std::ostream* progress = nullptr) {
  if (variants.empty() || seeds.empty()) throw ConfigError("ablation needs variants and seeds");
  AblationTable table;
  for (Variant v : variants) {
    AblationRow row;
    row.variant = v;
    std::vector<double> dr, ja, f, pa;
    for (std::uint64_t s : seeds) {
      TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = s;
      const PreparedData data = data_for(cfg);
      auto result = train(cfg, data);
      const auto& m = result.log.test.value;
      if (progress) {
        *progress << traits(v).name << " seed " << s << ": jaccard " << m.jaccard << " f1 "
                  << m.f1 << " pr_auc " << m.pr_auc << " ddi " << m.ddi_rate << '\n';
      }
      row.seeds.push_back(s);
      row.per_seed.push_back(m);
      dr.push_back(m.ddi_rate);
      ja.push_back(m.jaccard);
      f.push_back(m.f1);
      pa.push_back(m.pr_auc);
    }
    row.ddi_rate = spread(dr);
    row.jaccard = spread(ja);
    row.f1 = spread(f);
    row.pr_auc = spread(pa);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace algnet
