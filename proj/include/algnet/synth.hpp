#pragma once

// Planted-rule synthetic EHR corpus. Each diagnosis owns a fixed small set
// of "correct" medications and one procedure; a visit's medications are the
// union over its diagnoses plus at most one noise drug. The rule table is
// returned so tests can score the oracle that predicts it exactly.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "algnet/ehr_data.hpp"
#include "algnet/rng.hpp"

namespace algnet {

struct SynthConfig {
  std::size_t patients = 200;
  std::size_t n_diag = 40;
  std::size_t n_proc = 20;
  std::size_t n_med = 20;
  std::size_t min_visits = 1;
  std::size_t max_visits = 5;
  // Diagnoses a patient carries across visits; each visit draws from this pool.
  std::size_t min_pool = 2;
  std::size_t max_pool = 4;
  std::size_t min_diag_per_visit = 1;
  std::size_t max_diag_per_visit = 3;
  std::size_t min_meds_per_diag = 1;
  std::size_t max_meds_per_diag = 3;
  // Per-visit probability of one extra medication outside the planted union.
  double noise = 0.1;
  std::size_t ddi_edges = 12;
  std::uint64_t seed = 1;

  void validate() const {
    if (patients == 0 || n_diag == 0 || n_proc == 0) throw DataError("synth: sizes must be positive");
    if (n_med < 4) throw DataError("synth: need at least 4 medications");
    if (min_visits == 0 || min_visits > max_visits) throw DataError("synth: bad visit range");
    if (min_pool == 0 || min_pool > max_pool || max_pool > n_diag) {
      throw DataError("synth: bad diagnosis pool range");
    }
    if (min_diag_per_visit == 0 || min_diag_per_visit > max_diag_per_visit) {
      throw DataError("synth: bad diagnoses-per-visit range");
    }
    if (min_meds_per_diag == 0 || min_meds_per_diag > max_meds_per_diag ||
        max_meds_per_diag > n_med) {
      throw DataError("synth: bad medications-per-diagnosis range");
    }
    if (!(noise >= 0.0 && noise <= 1.0)) throw DataError("synth: noise must lie in [0, 1]");
    if (ddi_edges > n_med * (n_med - 1) / 2) throw DataError("synth: too many DDI edges");
  }
};

struct SynthCorpus {
  CodeVocab vocab;
  std::vector<PatientRecord> records;
  std::vector<std::pair<std::size_t, std::size_t>> ddi_edges;  // i < j
  std::vector<std::vector<std::size_t>> planted_meds;           // per diagnosis, sorted
  std::vector<std::size_t> planted_proc;                        // per diagnosis
};

/// Union of the planted medication sets of `diag`, sorted.
inline std::vector<std::size_t> planted_union(const SynthCorpus& corpus,
                                              const std::vector<std::size_t>& diag) {
  std::vector<std::size_t> out;
  for (std::size_t d : diag) {
    const auto& m = corpus.planted_meds.at(d);
    out.insert(out.end(), m.begin(), m.end());
  }
  normalize_code_set(out);
  return out;
}

inline SynthCorpus synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthCorpus c;
  for (std::size_t i = 0; i < cfg.n_diag; ++i) c.vocab.diag.intern("D" + std::to_string(i));
  for (std::size_t i = 0; i < cfg.n_proc; ++i) c.vocab.proc.intern("P" + std::to_string(i));
  for (std::size_t i = 0; i < cfg.n_med; ++i) c.vocab.med.intern("M" + std::to_string(i));

  c.planted_meds.resize(cfg.n_diag);
  c.planted_proc.resize(cfg.n_diag);
  for (std::size_t d = 0; d < cfg.n_diag; ++d) {
    const std::size_t k = rng.between(cfg.min_meds_per_diag, cfg.max_meds_per_diag);
    c.planted_meds[d] = rng.sample_distinct(cfg.n_med, k);
    normalize_code_set(c.planted_meds[d]);
    c.planted_proc[d] = rng.below(cfg.n_proc);
  }

  for (std::size_t p = 0; p < cfg.patients; ++p) {
    PatientRecord rec;
    std::ostringstream id;
    id << 'p' << std::setw(5) << std::setfill('0') << p;
    rec.id = id.str();
    const auto pool = rng.sample_distinct(cfg.n_diag, rng.between(cfg.min_pool, cfg.max_pool));
    const std::size_t n_visits = rng.between(cfg.min_visits, cfg.max_visits);
    for (std::size_t t = 0; t < n_visits; ++t) {
      const std::size_t hi = std::min(cfg.max_diag_per_visit, pool.size());
      const std::size_t lo = std::min(cfg.min_diag_per_visit, hi);
      Visit v;
      for (std::size_t k : rng.sample_distinct(pool.size(), rng.between(lo, hi))) {
        v.diag.push_back(pool[k]);
      }
      normalize_code_set(v.diag);
      for (std::size_t d : v.diag) v.proc.push_back(c.planted_proc[d]);
      normalize_code_set(v.proc);
      v.med = planted_union(c, v.diag);
      if (cfg.noise > 0.0 && rng.bernoulli(cfg.noise) && v.med.size() < cfg.n_med) {
        std::size_t extra;
        do {
          extra = rng.below(cfg.n_med);
        } while (std::binary_search(v.med.begin(), v.med.end(), extra));
        v.med.push_back(extra);
        normalize_code_set(v.med);
      }
      rec.visits.push_back(std::move(v));
    }
    c.records.push_back(std::move(rec));
  }

  // DDI edges go to the least co-prescribed pairs, ties broken at random.
  std::vector<std::size_t> counts(cfg.n_med * cfg.n_med, 0);
  for (const auto& rec : c.records)
    for (const auto& v : rec.visits)
      for (std::size_t x = 0; x < v.med.size(); ++x)
        for (std::size_t y = x + 1; y < v.med.size(); ++y) ++counts[v.med[x] * cfg.n_med + v.med[y]];
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < cfg.n_med; ++i)
    for (std::size_t j = i + 1; j < cfg.n_med; ++j) pairs.emplace_back(i, j);
  rng.shuffle(pairs);
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    return counts[a.first * cfg.n_med + a.second] < counts[b.first * cfg.n_med + b.second];
  });
  pairs.resize(cfg.ddi_edges);
  std::sort(pairs.begin(), pairs.end());
  c.ddi_edges = std::move(pairs);
  return c;
}

}  // namespace algnet
