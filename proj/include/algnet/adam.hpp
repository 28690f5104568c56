#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "algnet/params.hpp"

namespace algnet {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments laid out in the parameter store's order.
class AdamState {
 public:
  AdamState() = default;
  AdamState(const ParamStore& params, AdamConfig config) : config_(config) {
    for (const auto& [name, p] : params) {
      names_.push_back(name);
      m_.push_back(Tensor::zeros_like(p.value));
      v_.push_back(Tensor::zeros_like(p.value));
    }
  }

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step() const noexcept { return step_; }

  /// One bias-corrected Adam update from the gradients held in `params`.
  void apply(ParamStore& params) {
    if (params.size() != names_.size()) {
      throw Error("adam_step: optimizer tracks " + std::to_string(names_.size()) +
                  " parameters, store has " + std::to_string(params.size()));
    }
    ++step_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    std::size_t k = 0;
    for (auto& [name, p] : params) {
      if (name != names_[k]) throw Error("adam_step: missing gradient state for " + name);
      if (p.grad.shape() != p.value.shape() || m_[k].shape() != p.value.shape()) {
        throw ShapeError("adam_step: gradient for " + name + " has shape " +
                         to_string(p.grad.shape()) + ", parameter " +
                         to_string(p.value.shape()));
      }
      auto& w = p.value.storage();
      const auto& g = p.grad.storage();
      auto& m = m_[k].storage();
      auto& v = v_[k].storage();
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
      }
      ++k;
    }
  }

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::string> names_;
  std::vector<Tensor> m_, v_;
};

inline void adam_step(ParamStore& params, AdamState& state) { state.apply(params); }

}  // namespace algnet
