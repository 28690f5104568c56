#include <sstream>

#include <gtest/gtest.h>

#include "algnet/checkpoint.hpp"
#include "algnet/model.hpp"
#include "algnet/synth.hpp"
#include "algnet/toy_gradcheck.hpp"

namespace algnet {
namespace {

struct Toy {
  SynthCorpus corpus;
  ModelSizes sizes;
  GraphInputs graphs;

  explicit Toy(std::uint64_t seed = 3) : corpus(synth_generate(toy_synth_config(seed))) {
    sizes = ModelSizes::of(corpus.vocab);
    AdjacencyMatrix ddi(sizes.n_med, AdjacencyKind::Ddi);
    for (auto [i, j] : corpus.ddi_edges) ddi.set_edge(i, j, 1.0);
    graphs = GraphInputs::build(build_ehr_adjacency(corpus.records, sizes.n_med), ddi);
  }
};

std::vector<Tensor> all_probs(AlgNet& model, const Toy& toy) {
  std::vector<Tensor> out;
  for (const auto& rec : toy.corpus.records) {
    Tape tape;
    for (const auto& v : model.forward_patient(tape, rec, toy.graphs)) out.push_back(v.probs.value());
  }
  return out;
}

void perturb(ParamStore& params, std::string_view needle, double by) {
  for (auto& [name, p] : params)
    if (name.find(needle) != std::string::npos)
      for (double& v : p.value.data()) v += by;
}

TEST(Model, OutputShapesAndRange) {
  Toy toy;
  AlgNet model = AlgNet::initialize(toy_train_config(1), toy.sizes);
  Tape tape;
  const auto& rec = toy.corpus.records[0];
  const auto outs = model.forward_patient(tape, rec, toy.graphs);
  ASSERT_EQ(outs.size(), rec.visits.size());
  for (const auto& o : outs) {
    EXPECT_EQ(o.probs.value().shape(), (Shape{toy.sizes.n_med}));
    EXPECT_EQ(o.state.value().shape(), (Shape{8}));
    for (double p : o.probs.value().data()) {
      EXPECT_GT(p, 0.0);
      EXPECT_LT(p, 1.0);
    }
    for (double a : o.state.value().data()) EXPECT_LE(std::abs(a), 1.0);
  }
  EXPECT_EQ(model.forward_patient(tape, rec, toy.graphs, 1).size(), 1u);
}

TEST(Model, FirstVisitReadsNoDynamicMemory) {
  Toy toy;
  for (const auto& t : kVariants) {
    AlgNet model = AlgNet::initialize(toy_train_config(1, t.variant), toy.sizes);
    for (const auto& rec : toy.corpus.records) {
      Tape tape;
      const auto outs = model.forward_patient(tape, rec, toy.graphs);
      EXPECT_EQ(outs[0].o_d.value(), Tensor(Shape{8}, 0.0)) << t.name;
      if (outs.size() > 1) {
        EXPECT_NE(outs[1].o_d.value(), Tensor(Shape{8}, 0.0)) << t.name;
      }
      Tape t2;
      EXPECT_NO_THROW(t2.backward(model.patient_loss(t2, rec, toy.graphs))) << t.name;
    }
  }
}

TEST(Model, NoRnnVariantIgnoresRecurrentParams) {
  Toy toy;
  AlgNet model = AlgNet::initialize(toy_train_config(1, Variant::A_LGNET_NO_RNN), toy.sizes);
  const auto before = all_probs(model, toy);
  perturb(model.params(), ".gru.", 0.3);
  perturb(model.params(), ".lstm.", 0.3);
  EXPECT_EQ(all_probs(model, toy), before);
  perturb(model.params(), ".attn.wv", 0.3);
  EXPECT_NE(all_probs(model, toy), before);
}

TEST(Model, NoAttentionVariantIgnoresAttentionParams) {
  Toy toy;
  AlgNet model = AlgNet::initialize(toy_train_config(1, Variant::RNN_LGNET), toy.sizes);
  const auto before = all_probs(model, toy);
  perturb(model.params(), ".attn.", 0.3);
  perturb(model.params(), "gcn.", 0.3);
  EXPECT_EQ(all_probs(model, toy), before);
  perturb(model.params(), ".gru.u", 0.3);
  EXPECT_NE(all_probs(model, toy), before);
}

TEST(Model, GcnVariantUsesGcnWeights) {
  Toy toy;
  AlgNet model = AlgNet::initialize(toy_train_config(1, Variant::RNN_GCN), toy.sizes);
  const auto before = all_probs(model, toy);
  perturb(model.params(), "gcn.ehr", 0.3);
  EXPECT_NE(all_probs(model, toy), before);
}

TEST(Model, ToyGradientsMatchFiniteDifferences) {
  for (Variant v : {Variant::ALGNET, Variant::LSTM_GCN, Variant::A_LGNET_NO_RNN}) {
    const auto r = run_toy_gradcheck(2, v);
    for (const auto& g : r.groups) EXPECT_TRUE(g.passed) << variant_name(v) << ' ' << g.group << ' ' << g.max_rel_error;
    EXPECT_TRUE(r.passed());
  }
}

TEST(Model, ToyGradCheckCoversEveryGroup) {
  const auto r = run_toy_gradcheck(1);
  std::vector<std::string> groups;
  for (const auto& g : r.groups) groups.push_back(g.group);
  for (const char* want : {"embeddings", "attention", "gru", "fusion", "lgc_base_embedding", "prediction_head"})
    EXPECT_NE(std::find(groups.begin(), groups.end(), want), groups.end()) << want;
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c;
  c.dim = 16;
  c.alpha = 0.25;
  c.variant = Variant::A_RNN_GCN;
  c.pooling = Pooling::Mean;
  c.split = {0.6, 0.2, 0.2};
  const TrainConfig back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(Config, OverlayAndErrors) {
  TrainConfig base;
  base.lr = 0.01;
  const TrainConfig c = config_from_json(nlohmann::json{{"epochs", 3}}, base);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.lr, 0.01);
  EXPECT_THROW(config_from_json(nlohmann::json{{"epoch", 3}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"dim", "big"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"variant", "BERT"}}), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::array()), ConfigError);
  TrainConfig zero;
  zero.epochs = 0;
  EXPECT_THROW(zero.validate(), ConfigError);
  TrainConfig bad_theta;
  bad_theta.theta0 = 0.5;
  EXPECT_THROW(bad_theta.validate(), ConfigError);
}

TEST(Config, VariantNames) {
  for (const auto& t : kVariants) EXPECT_EQ(parse_variant(t.name), t.variant);
  EXPECT_THROW(parse_variant("algnet"), ConfigError);
}

TEST(Checkpoint, RoundTripIsExact) {
  Toy toy;
  AlgNet model = AlgNet::initialize(toy_train_config(4, Variant::A_LSTM_GCN), toy.sizes);
  std::stringstream buf;
  write_checkpoint(buf, model.config(), toy.corpus.vocab, model.sizes(), model.params());
  const std::string bytes = buf.str();
  AlgNet back = model_from_checkpoint(read_checkpoint(buf));
  EXPECT_TRUE(back.params().same_values(model.params()));
  EXPECT_EQ(config_to_json(back.config()), config_to_json(model.config()));
  EXPECT_EQ(all_probs(back, toy), all_probs(model, toy));
  std::stringstream again;
  write_checkpoint(again, back.config(), toy.corpus.vocab, back.sizes(), back.params());
  EXPECT_EQ(again.str(), bytes);
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("NOTACKPT....");
  EXPECT_THROW(read_checkpoint(bad), Error);
  Toy toy;
  AlgNet model = AlgNet::initialize(toy_train_config(4), toy.sizes);
  std::stringstream buf;
  write_checkpoint(buf, model.config(), toy.corpus.vocab, model.sizes(), model.params());
  std::string s = buf.str();
  std::stringstream truncated(s.substr(0, s.size() - 9));
  EXPECT_THROW(read_checkpoint(truncated), Error);
}

}  // namespace
}  // namespace algnet
