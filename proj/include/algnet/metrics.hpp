#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "algnet/ehr_data.hpp"
#include "algnet/losses.hpp"

namespace algnet {

/// One visit's ground truth, scores, and thresholded prediction.
struct VisitEval {
  std::vector<std::size_t> truth;      // sorted
  std::vector<double> probs;           // one score per medication
  std::vector<std::size_t> predicted;  // {j : probs[j] > threshold}, sorted
};

inline VisitEval make_visit_eval(std::vector<std::size_t> truth, std::vector<double> probs,
                                 double threshold = 0.5) {
  normalize_code_set(truth);
  VisitEval e;
  e.predicted = threshold_set(probs, threshold);
  e.truth = std::move(truth);
  e.probs = std::move(probs);
  return e;
}

inline std::size_t intersection_size(const std::vector<std::size_t>& a,
                                     const std::vector<std::size_t>& b) {
  std::size_t n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

// Per-visit scores ----------------------------------------------------------

/// |Y ∩ Ŷ| / |Y ∪ Ŷ|; 1 when both are empty.
inline double visit_jaccard(const VisitEval& e) {
  const std::size_t inter = intersection_size(e.truth, e.predicted);
  const std::size_t uni = e.truth.size() + e.predicted.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Harmonic mean of precision |Y∩Ŷ|/|Ŷ| and recall |Y∩Ŷ|/|Y|. 0 when either
/// is 0; 1 when both sets are empty.
inline double visit_f1(const VisitEval& e) {
  if (e.truth.empty() && e.predicted.empty()) return 1.0;
  const double inter = static_cast<double>(intersection_size(e.truth, e.predicted));
  const double p = e.predicted.empty() ? 0.0 : inter / static_cast<double>(e.predicted.size());
  const double r = e.truth.empty() ? 0.0 : inter / static_cast<double>(e.truth.size());
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

/// Average precision: sum over descending score thresholds of
/// precision * recall increment. Tied scores enter together, so this is the
/// step-wise area under the precision/recall curve. 0 when Y is empty.
inline double visit_average_precision(const VisitEval& e) {
  if (e.truth.empty()) return 0.0;
  const std::size_t n = e.probs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return e.probs[a] > e.probs[b]; });
  std::vector<bool> positive(n, false);
  for (std::size_t i : e.truth) positive.at(i) = true;
  const double total_pos = static_cast<double>(e.truth.size());
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t k = 0; k < n;) {
    std::size_t end = k;
    while (end < n && e.probs[order[end]] == e.probs[order[k]]) {
      tp += positive[order[end]];
      ++end;
    }
    seen = end;
    const double recall = static_cast<double>(tp) / total_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    k = end;
  }
  return ap;
}

// Aggregates ----------------------------------------------------------------

namespace detail {
template <typename F>
double mean_over(std::span<const VisitEval> evals, F f) {
  if (evals.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : evals) s += f(e);
  return s / static_cast<double>(evals.size());
}
}  // namespace detail

inline double jaccard(std::span<const VisitEval> evals) {
  return detail::mean_over(evals, visit_jaccard);
}

inline double f1(std::span<const VisitEval> evals) { return detail::mean_over(evals, visit_f1); }

inline double pr_auc(std::span<const VisitEval> evals) {
  return detail::mean_over(evals, visit_average_precision);
}

inline double avg_drugs(std::span<const VisitEval> evals) {
  return detail::mean_over(evals, [](const VisitEval& e) {
    return static_cast<double>(e.predicted.size());
  });
}

/// Interacting predicted pairs over all predicted pairs, pooled across
/// visits. 0 when no visit predicts two or more drugs.
inline double ddi_rate(std::span<const VisitEval> evals, const AdjacencyMatrix& ddi) {
  std::size_t bad = 0, all = 0;
  for (const auto& e : evals) {
    for (std::size_t x = 0; x < e.predicted.size(); ++x) {
      for (std::size_t y = x + 1; y < e.predicted.size(); ++y) {
        ++all;
        bad += ddi(e.predicted[x], e.predicted[y]) != 0.0;
      }
    }
  }
  return all == 0 ? 0.0 : static_cast<double>(bad) / static_cast<double>(all);
}

struct MetricValues {
  double ddi_rate = 0.0;
  double jaccard = 0.0;
  double f1 = 0.0;
  double pr_auc = 0.0;
  double avg_drugs = 0.0;

  bool operator==(const MetricValues&) const = default;
};

inline MetricValues compute_metrics(std::span<const VisitEval> evals, const AdjacencyMatrix& ddi) {
  return {ddi_rate(evals, ddi), jaccard(evals), f1(evals), pr_auc(evals), avg_drugs(evals)};
}

}  // namespace algnet
