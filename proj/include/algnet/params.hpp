#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "algnet/rng.hpp"
#include "algnet/tensor.hpp"

namespace algnet {

struct Parameter {
  Tensor value;
  Tensor grad;
};

/// Named parameters in insertion order. Insertion order is the iteration
/// order everywhere (init, optimizer, checkpoints), so a fixed construction
/// sequence gives a fixed layout.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other) { *this = other; }
  ParamStore& operator=(const ParamStore& other) {
    entries_ = other.entries_;
    rebuild_index();
    return *this;
  }
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter& add(std::string name, Tensor value) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    Tensor grad = Tensor::zeros_like(value);
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), Parameter{std::move(value), std::move(grad)}});
    return entries_.back().second;
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  Parameter& get(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error("unknown parameter: " + std::string(name));
    return entries_[it->second].second;
  }
  const Parameter& get(std::string_view name) const {
    return const_cast<ParamStore*>(this)->get(name);
  }

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  void zero_grad() {
    for (auto& [name, p] : entries_) p.grad.fill(0.0);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) n += p.value.size();
    return n;
  }

  /// Values only; gradients are not part of a model's identity.
  bool same_values(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].first != other.entries_[i].first) return false;
      if (!(entries_[i].second.value == other.entries_[i].second.value)) return false;
    }
    return true;
  }

 private:
  void rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
  }

  std::vector<std::pair<std::string, Parameter>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform in [-bound, bound].
inline Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace algnet
