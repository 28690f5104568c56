#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "algnet/autodiff.hpp"

namespace algnet {

/// Builds a scalar loss on the given tape from the current parameter values.
/// Must be deterministic.
using LossClosure = std::function<Var(Tape&, ParamStore&)>;

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradCheckReport {
  double epsilon = 0.0;
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, scale_floor). Below the floor
  // the comparison is absolute (tolerance * scale_floor = 1e-9 by default),
  // roughly the round-off of a central difference of an O(10) loss at h=1e-5.
  double scale_floor = 1e-5;
  // Only parameters accepted by the filter are checked (all if empty).
  std::function<bool(const std::string&)> filter;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients with central differences, entry by entry.
inline GradCheckReport grad_check(const LossClosure& loss_fn, ParamStore& params,
                                  const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  report.epsilon = opts.epsilon;
  report.tolerance = opts.tolerance;

  params.zero_grad();
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    tape.backward(loss);
  }

  auto eval = [&]() {
    Tape tape;
    return loss_fn(tape, params).value().item();
  };

  for (auto& [name, p] : params) {
    if (opts.filter && !opts.filter(name)) continue;
    GradCheckEntry entry;
    entry.name = name;
    const Tensor analytic = p.grad;
    auto& w = p.value.storage();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + opts.epsilon;
      const double up = eval();
      w[i] = saved - opts.epsilon;
      const double down = eval();
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double rel = relative_error(analytic[i], numeric, opts.scale_floor);
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      ++entry.checked;
    }
    entry.passed = entry.max_rel_error < opts.tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace algnet
