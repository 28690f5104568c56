#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "algnet/adam.hpp"
#include "algnet/ehr_data.hpp"
#include "algnet/losses.hpp"
#include "algnet/patient_encoder.hpp"

namespace algnet {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class SequenceBranch { Gru, Lstm, None };
enum class GraphLayer { Lgc, Gcn };

/// The ablation grid: sequence branch x attention on/off x graph layer.
enum class Variant {
  ALGNET,
  RNN_LGNET,
  LSTM_LGNET,
  A_LGNET_NO_RNN,
  A_LSTM_LGNET,
  RNN_GCN,
  LSTM_GCN,
  A_GCN,
  A_LSTM_GCN,
  A_RNN_GCN,
};

struct VariantTraits {
  Variant variant;
  std::string_view name;     // CLI / config spelling
  std::string_view display;  // table row label
  SequenceBranch sequence;
  bool attention;
  GraphLayer graph;
};

inline constexpr std::array<VariantTraits, 10> kVariants{{
    {Variant::ALGNET, "ALGNET", "ALGNet", SequenceBranch::Gru, true, GraphLayer::Lgc},
    {Variant::RNN_LGNET, "RNN_LGNET", "RNN-LGNet", SequenceBranch::Gru, false, GraphLayer::Lgc},
    {Variant::LSTM_LGNET, "LSTM_LGNET", "LSTM-LGNet", SequenceBranch::Lstm, false, GraphLayer::Lgc},
    {Variant::A_LGNET_NO_RNN, "A_LGNET_NO_RNN", "A-LGNet^-RNN", SequenceBranch::None, true,
     GraphLayer::Lgc},
    {Variant::A_LSTM_LGNET, "A_LSTM_LGNET", "A-LSTM-LGNet", SequenceBranch::Lstm, true,
     GraphLayer::Lgc},
    {Variant::RNN_GCN, "RNN_GCN", "RNN-GCN (GAMENet)", SequenceBranch::Gru, false, GraphLayer::Gcn},
    {Variant::LSTM_GCN, "LSTM_GCN", "LSTM-GCN", SequenceBranch::Lstm, false, GraphLayer::Gcn},
    {Variant::A_GCN, "A_GCN", "A-GCN", SequenceBranch::None, true, GraphLayer::Gcn},
    {Variant::A_LSTM_GCN, "A_LSTM_GCN", "A-LSTM-GCN", SequenceBranch::Lstm, true, GraphLayer::Gcn},
    {Variant::A_RNN_GCN, "A_RNN_GCN", "A-RNN-GCN", SequenceBranch::Gru, true, GraphLayer::Gcn},
}};

inline const VariantTraits& traits(Variant v) {
  for (const auto& t : kVariants)
    if (t.variant == v) return t;
  throw ConfigError("unknown variant");
}

inline std::string_view variant_name(Variant v) { return traits(v).name; }

inline Variant parse_variant(std::string_view name) {
  for (const auto& t : kVariants)
    if (t.name == name) return t.variant;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

struct TrainConfig {
  std::size_t dim = 64;
  std::size_t heads = 8;
  std::size_t lgc_layers = 2;
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 1.0;
  double theta0 = 0.95;
  double theta1 = 0.05;
  double w_ddi = 0.0;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 60;
  std::uint64_t seed = 1;
  SplitRatios split;
  double threshold = 0.5;
  Variant variant = Variant::ALGNET;
  bool include_layer0 = false;
  Pooling pooling = Pooling::Last;
  bool teacher_forcing = true;
  bool step_per_visit = false;
  std::size_t bootstrap_rounds = 10;

  std::size_t model_dim() const { return dim * heads; }

  LossWeights loss_weights() const { return {theta0, theta1, w_ddi}; }
  AdamConfig adam() const { return {lr, beta1, beta2, adam_eps}; }

  void validate() const {
    if (dim == 0) throw ConfigError("dim must be positive");
    if (heads == 0) throw ConfigError("heads must be positive");
    if (lgc_layers == 0) throw ConfigError("lgc_layers must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (!(split.train > 0 && split.val > 0 && split.test > 0)) {
      throw ConfigError("split ratios must be positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
      throw ConfigError("invalid Adam hyperparameters");
    }
    for (double v : {alpha, beta, gamma}) {
      if (!std::isfinite(v)) throw ConfigError("alpha, beta, gamma must be finite");
    }
    try {
      loss_weights().validate();
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {
      {"dim", c.dim},
      {"heads", c.heads},
      {"lgc_layers", c.lgc_layers},
      {"alpha", c.alpha},
      {"beta", c.beta},
      {"gamma", c.gamma},
      {"theta0", c.theta0},
      {"theta1", c.theta1},
      {"w_ddi", c.w_ddi},
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"adam_eps", c.adam_eps},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"split", {c.split.train, c.split.val, c.split.test}},
      {"threshold", c.threshold},
      {"variant", std::string(variant_name(c.variant))},
      {"include_layer0", c.include_layer0},
      {"pooling", c.pooling == Pooling::Last ? "last" : "mean"},
      {"teacher_forcing", c.teacher_forcing},
      {"step_per_visit", c.step_per_visit},
      {"bootstrap_rounds", c.bootstrap_rounds},
  };
}

/// Overlays the fields present in `j` onto `base`. Unknown fields are an
/// error.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "dim") base.dim = v.get<std::size_t>();
      else if (k == "heads") base.heads = v.get<std::size_t>();
      else if (k == "lgc_layers") base.lgc_layers = v.get<std::size_t>();
      else if (k == "alpha") base.alpha = v.get<double>();
      else if (k == "beta") base.beta = v.get<double>();
      else if (k == "gamma") base.gamma = v.get<double>();
      else if (k == "theta0") base.theta0 = v.get<double>();
      else if (k == "theta1") base.theta1 = v.get<double>();
      else if (k == "w_ddi") base.w_ddi = v.get<double>();
      else if (k == "lr") base.lr = v.get<double>();
      else if (k == "beta1") base.beta1 = v.get<double>();
      else if (k == "beta2") base.beta2 = v.get<double>();
      else if (k == "adam_eps") base.adam_eps = v.get<double>();
      else if (k == "epochs") base.epochs = v.get<std::size_t>();
      else if (k == "seed") base.seed = v.get<std::uint64_t>();
      else if (k == "split") {
        if (!v.is_array() || v.size() != 3) throw ConfigError("split must be [train, val, test]");
        base.split = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
      } else if (k == "threshold") base.threshold = v.get<double>();
      else if (k == "variant") base.variant = parse_variant(v.get<std::string>());
      else if (k == "include_layer0") base.include_layer0 = v.get<bool>();
      else if (k == "pooling") {
        const auto p = v.get<std::string>();
        if (p == "last") base.pooling = Pooling::Last;
        else if (p == "mean") base.pooling = Pooling::Mean;
        else throw ConfigError("pooling must be 'last' or 'mean'");
      } else if (k == "teacher_forcing") base.teacher_forcing = v.get<bool>();
      else if (k == "step_per_visit") base.step_per_visit = v.get<bool>();
      else if (k == "bootstrap_rounds") base.bootstrap_rounds = v.get<std::size_t>();
      else throw ConfigError("unknown config field '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return base;
}

inline TrainConfig load_config(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return config_from_json(nlohmann::json::parse(in), base);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

}  // namespace algnet
