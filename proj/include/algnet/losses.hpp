#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "algnet/autodiff.hpp"

namespace algnet {

/// Binary cross-entropy on logits, summed over labels:
///   sum_i softplus(z_i) - y_i z_i
/// which equals -[y log s(z) + (1-y) log(1-s(z))] without forming s(z).
inline Var loss_bce(Var logits, const Tensor& target) {
  const Tensor& z = logits.value();
  detail::require_same_shape("loss_bce", z, target);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    total += std::max(zi, 0.0) - zi * target[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  return logits.tape().record("loss_bce", Tensor::scalar(total), {logits},
                              [logits, target](Tape& t, const Tensor& g) {
                                if (!t.requires_grad(logits)) return;
                                auto& gz = t.grad_buffer(logits);
                                const Tensor& zv = logits.value();
                                for (std::size_t i = 0; i < zv.size(); ++i)
                                  gz[i] += g[0] * (sigmoid_scalar(zv[i]) - target[i]);
                              });
}

/// Indices j with probs[j] > threshold.
inline std::vector<std::size_t> threshold_set(std::span<const double> probs, double threshold = 0.5) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < probs.size(); ++j)
    if (probs[j] > threshold) out.push_back(j);
  return out;
}

/// Multi-label hinge over every label i and every predicted label j:
///   sum_i sum_{j in Yhat} max(0, 1 - (p[j] - p[i])) / (|Y| * |C_m|)
/// with Yhat = {j : p[j] > threshold}. Zero when Yhat or Y is empty. The
/// predicted set is treated as fixed when differentiating.
inline Var loss_mll(Var probs, std::span<const std::size_t> truth, double threshold = 0.5) {
  const Tensor& p = probs.value();
  const std::size_t n = p.size();
  const auto predicted = threshold_set(p.data(), threshold);
  const double norm = static_cast<double>(truth.size()) * static_cast<double>(n);
  double total = 0.0;
  if (!predicted.empty() && norm > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j : predicted) total += std::max(0.0, 1.0 - (p[j] - p[i]));
    total /= norm;
  }
  return probs.tape().record(
      "loss_mll", Tensor::scalar(total), {probs}, [probs, predicted, norm](Tape& t, const Tensor& g) {
        if (!t.requires_grad(probs) || predicted.empty() || norm <= 0.0) return;
        auto& gp = t.grad_buffer(probs);
        const Tensor& pv = probs.value();
        const double c = g[0] / norm;
        for (std::size_t i = 0; i < pv.size(); ++i) {
          for (std::size_t j : predicted) {
            if (1.0 - (pv[j] - pv[i]) > 0.0) {
              gp[j] -= c;
              gp[i] += c;
            }
          }
        }
      });
}

/// sum_{i,j} A[i][j] p_i p_j.
inline Var loss_interaction(Var probs, const Tensor& ddi) {
  const Tensor& p = probs.value();
  const std::size_t n = p.size();
  if (ddi.rank() != 2 || ddi.dim(0) != n || ddi.dim(1) != n) {
    throw ShapeError("loss_interaction: adjacency " + to_string(ddi.shape()) +
                     " does not match predictions " + to_string(p.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) total += ddi[i * n + j] * p[i] * p[j];
  return probs.tape().record("loss_interaction", Tensor::scalar(total), {probs},
                             [probs, ddi, n](Tape& t, const Tensor& g) {
                               if (!t.requires_grad(probs)) return;
                               auto& gp = t.grad_buffer(probs);
                               const Tensor& pv = probs.value();
                               for (std::size_t i = 0; i < n; ++i) {
                                 double s = 0.0;
                                 for (std::size_t j = 0; j < n; ++j)
                                   s += (ddi[i * n + j] + ddi[j * n + i]) * pv[j];
                                 gp[i] += g[0] * s;
                               }
                             });
}

struct LossWeights {
  double theta0 = 0.95;  // BCE
  double theta1 = 0.05;  // multi-label hinge
  double w_ddi = 0.0;    // interaction term, off by default

  void validate() const {
    if (!(theta0 >= 0.0) || !(theta1 >= 0.0) || std::abs(theta0 + theta1 - 1.0) > 1e-9) {
      throw Error("loss weights: theta0 and theta1 must be nonnegative and sum to 1");
    }
    if (!(w_ddi >= 0.0)) throw Error("loss weights: w_ddi must be nonnegative");
  }
};

/// theta0 * bce + theta1 * mll, plus w_ddi * interaction when w_ddi > 0.
inline Var loss_total(Var bce, Var mll, const LossWeights& w, const Var* interaction = nullptr) {
  w.validate();
  Var total = add(scale(bce, w.theta0), scale(mll, w.theta1));
  if (w.w_ddi > 0.0) {
    if (!interaction) throw Error("loss_total: w_ddi > 0 but no interaction term given");
    total = add(total, scale(*interaction, w.w_ddi));
  }
  return total;
}

}  // namespace algnet
