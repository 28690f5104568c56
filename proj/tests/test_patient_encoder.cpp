#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "algnet/patient_encoder.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace algnet {
namespace {

using oracle::Mat;

struct AttentionFixture {
  oracle::AttentionParams p;
  AttentionWeights w;

  AttentionFixture(Tape& t, std::size_t d, std::size_t heads, std::size_t dk, Rng& rng) {
    const std::size_t dm = heads * dk;
    p = {oracle::random_mat(d, dm, rng), oracle::random_mat(d, dm, rng), oracle::random_mat(d, dm, rng),
         oracle::random_mat(dm, d, rng), oracle::random_mat(d, d, rng),
         oracle::random_mat(1, d, rng)[0], heads, dk};
    w = {t.constant(oracle::to_tensor(p.wq)), t.constant(oracle::to_tensor(p.wk)),
         t.constant(oracle::to_tensor(p.wv)), t.constant(oracle::to_tensor(p.wo)),
         t.constant(oracle::to_tensor(p.proj_w)), t.constant(Tensor::vector(p.proj_b)), heads, dk};
  }
};

TEST(EmbedVisits, SumsCodeRows) {
  Tape t;
  Var table = t.constant(Tensor::matrix({{1, 0}, {0, 1}, {5, 5}}));
  std::vector<Visit> visits{{{0}, {1}, {0}}, {{2, 1}, {0}, {0}}};
  auto e = embed_visits(table, visits, CodeField::Diagnosis);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0].value(), Tensor::vector({1, 0}));
  EXPECT_EQ(e[1].value(), Tensor::vector({5, 6}));
  std::vector<Visit> swapped{{{1, 2}, {0}, {0}}};
  EXPECT_EQ(embed_visits(table, swapped, CodeField::Diagnosis)[0].value(), e[1].value());
  std::vector<Visit> empty{{{}, {0}, {0}}};
  EXPECT_THROW(embed_visits(table, empty, CodeField::Diagnosis), DataError);
}

TEST(Attention, SinglePositionHasUnitWeight) {
  Rng rng(1);
  Tape t;
  AttentionFixture f(t, 4, 2, 3, rng);
  const Mat seq = oracle::random_mat(1, 4, rng);
  AttentionTrace trace;
  const Tensor s = mhsa_forward(t.constant(oracle::to_tensor(seq)), f.w, Pooling::Last, &trace).value();
  ASSERT_EQ(trace.weights.size(), 2u);
  for (const auto& w : trace.weights) EXPECT_EQ(w, Tensor::vector({1.0}));
  // No mixing: value pathway only.
  oracle::Vec v = oracle::vec_mat(oracle::vec_mat(oracle::vec_mat(seq[0], f.p.wv), f.p.wo), f.p.proj_w);
  for (std::size_t c = 0; c < 4; ++c) v[c] += f.p.proj_b[c];
  EXPECT_LE(oracle::max_diff(oracle::to_mat(s)[0], v), 1e-14);
}

TEST(Attention, IdenticalPositionsGiveIdenticalOutputs) {
  Rng rng(2);
  Tape t;
  AttentionFixture f(t, 4, 2, 3, rng);
  const Mat row = oracle::random_mat(1, 4, rng);
  const Mat seq{row[0], row[0]};
  AttentionTrace trace;
  mhsa_forward(t.constant(oracle::to_tensor(seq)), f.w, Pooling::Mean, &trace);
  for (const auto& w : trace.weights) {
    EXPECT_EQ(w.at(0, 0), w.at(1, 0));
    EXPECT_EQ(w.at(0, 1), w.at(1, 1));
    EXPECT_DOUBLE_EQ(w.at(0, 0), 0.5);
  }
}

TEST(Attention, MatchesNaivePerHeadLoop) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = rng.between(1, 6);
    Tape t;
    AttentionFixture f(t, 6, 3, 4, rng);
    const Mat seq = oracle::random_mat(len, 6, rng);
    for (bool last : {true, false}) {
      AttentionTrace trace;
      const Tensor s = mhsa_forward(t.constant(oracle::to_tensor(seq)), f.w,
                                    last ? Pooling::Last : Pooling::Mean, &trace).value();
      const auto ref = oracle::naive_attention(seq, f.p, last);
      EXPECT_LE(oracle::max_diff(oracle::to_mat(s)[0], ref.output), 1e-10);
      for (std::size_t h = 0; h < 3; ++h) {
        EXPECT_LE(oracle::max_diff(oracle::to_mat(trace.weights[h]), ref.weights[h]), 1e-12);
        for (const auto& r : oracle::to_mat(trace.weights[h])) {
          double sum = 0.0;
          for (double v : r) sum += v;
          EXPECT_NEAR(sum, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Attention, IncrementalCacheMatchesFullSequence) {
  Rng rng(4);
  Tape t;
  AttentionFixture f(t, 5, 2, 3, rng);
  const Mat seq = oracle::random_mat(4, 5, rng);
  AttentionCache cache;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    cache.append(t.constant(Tensor::vector(seq[i])), f.w);
    const Tensor inc = attention_readout(cache, f.w, Pooling::Last).value();
    const Mat prefix(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(i + 1));
    EXPECT_EQ(inc, mhsa_forward(t.constant(oracle::to_tensor(prefix)), f.w).value());
  }
}

TEST(Attention, LastOutputIgnoresHistoryOrder) {
  Rng rng(5);
  Tape t;
  AttentionFixture f(t, 4, 2, 2, rng);
  Mat seq = oracle::random_mat(5, 4, rng);
  const Tensor a = mhsa_forward(t.constant(oracle::to_tensor(seq)), f.w).value();
  std::swap(seq[0], seq[3]);
  std::swap(seq[1], seq[2]);
  const Tensor b = mhsa_forward(t.constant(oracle::to_tensor(seq)), f.w).value();
  EXPECT_LE(max_abs_diff(a, b), 1e-13);
}

TEST(Attention, EmptySequenceThrows) {
  Rng rng(6);
  Tape t;
  AttentionFixture f(t, 4, 2, 2, rng);
  std::vector<Var> none;
  EXPECT_THROW(mhsa_forward(std::span<const Var>(none), f.w), Error);
}

TEST(Attention, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  std::vector<Tensor> in{testing::random_tensor({3, 4}, rng)};
  for (Shape s : {Shape{4, 6}, Shape{4, 6}, Shape{4, 6}, Shape{6, 4}, Shape{4, 4}, Shape{4}})
    in.push_back(testing::random_tensor(s, rng));
  for (Pooling pool : {Pooling::Last, Pooling::Mean}) {
    const auto report = testing::check_op(in, [pool](auto& x) {
      AttentionWeights w{x[1], x[2], x[3], x[4], x[5], x[6], 2, 3};
      return mhsa_forward(x[0], w, pool);
    });
    EXPECT_TRUE(report.passed()) << report.max_rel_error();
  }
}

GruWeights gru_vars(Tape& t, const oracle::GruParams& p) {
  auto m = [&](const Mat& x) { return t.constant(oracle::to_tensor(x)); };
  auto v = [&](const oracle::Vec& x) { return t.constant(Tensor::vector(x)); };
  return {m(p.wz), m(p.uz), v(p.bz), m(p.wr), m(p.ur), v(p.br), m(p.wc), m(p.uc), v(p.bc)};
}

oracle::GruParams random_gru(std::size_t in, std::size_t h, Rng& rng) {
  return {oracle::random_mat(in, h, rng), oracle::random_mat(h, h, rng), oracle::random_mat(in, h, rng),
          oracle::random_mat(h, h, rng),  oracle::random_mat(in, h, rng), oracle::random_mat(h, h, rng),
          oracle::random_mat(1, h, rng)[0], oracle::random_mat(1, h, rng)[0],
          oracle::random_mat(1, h, rng)[0]};
}

TEST(Gru, ForwardMatchesManualUnrolling) {
  Rng rng(8);
  const auto p = random_gru(5, 5, rng);
  const Mat seq = oracle::random_mat(4, 5, rng);
  Tape t;
  std::vector<Var> xs;
  for (const auto& x : seq) xs.push_back(t.constant(Tensor::vector(x)));
  const GruWeights w = gru_vars(t, p);
  oracle::Vec h(5, 0.0);
  for (const auto& x : seq) h = oracle::gru_step(x, h, p);
  EXPECT_LE(oracle::max_diff(gru_forward(xs, w).value().storage(), h), 1e-14);
  const oracle::Vec h1 = oracle::gru_step(seq[0], oracle::Vec(5, 0.0), p);
  EXPECT_LE(oracle::max_diff(gru_forward(std::span(xs).first(1), w).value().storage(), h1), 1e-15);
}

TEST(Gru, ZeroWeightsGiveZeroState) {
  Rng rng(9);
  oracle::GruParams p{Mat(3, oracle::Vec(3, 0.0)), Mat(3, oracle::Vec(3, 0.0)), Mat(3, oracle::Vec(3, 0.0)),
                      Mat(3, oracle::Vec(3, 0.0)), Mat(3, oracle::Vec(3, 0.0)), Mat(3, oracle::Vec(3, 0.0)),
                      oracle::Vec(3, 0.0), oracle::Vec(3, 0.0), oracle::Vec(3, 0.0)};
  Tape t;
  std::vector<Var> xs;
  for (const auto& x : oracle::random_mat(4, 3, rng)) xs.push_back(t.constant(Tensor::vector(x)));
  EXPECT_EQ(gru_forward(xs, gru_vars(t, p)).value(), Tensor(Shape{3}, 0.0));
}

TEST(Gru, OrderSensitive) {
  Rng rng(10);
  const auto p = random_gru(4, 4, rng);
  const Mat seq = oracle::random_mat(3, 4, rng);
  Tape t;
  const GruWeights w = gru_vars(t, p);
  std::vector<Var> fwd, rev;
  for (const auto& x : seq) fwd.push_back(t.constant(Tensor::vector(x)));
  rev = {fwd[1], fwd[0], fwd[2]};
  EXPECT_GT(max_abs_diff(gru_forward(fwd, w).value(), gru_forward(rev, w).value()), 1e-6);
}

TEST(Lstm, ForwardMatchesManualUnrolling) {
  Rng rng(11);
  const std::size_t n = 3;
  std::vector<Mat> ws, us;
  std::vector<oracle::Vec> bs;
  for (int g = 0; g < 4; ++g) {
    ws.push_back(oracle::random_mat(n, n, rng));
    us.push_back(oracle::random_mat(n, n, rng));
    bs.push_back(oracle::random_mat(1, n, rng)[0]);
  }
  const Mat seq = oracle::random_mat(4, n, rng);
  Tape t;
  auto m = [&](const Mat& x) { return t.constant(oracle::to_tensor(x)); };
  auto v = [&](const oracle::Vec& x) { return t.constant(Tensor::vector(x)); };
  LstmWeights w{m(ws[0]), m(us[0]), v(bs[0]), m(ws[1]), m(us[1]), v(bs[1]),
                m(ws[2]), m(us[2]), v(bs[2]), m(ws[3]), m(us[3]), v(bs[3])};
  std::vector<Var> xs;
  for (const auto& x : seq) xs.push_back(t.constant(Tensor::vector(x)));
  oracle::Vec h(n, 0.0), c(n, 0.0);
  for (const auto& x : seq) {
    oracle::Vec pre[4];
    for (int g = 0; g < 4; ++g) {
      const auto a = oracle::vec_mat(x, ws[g]), b = oracle::vec_mat(h, us[g]);
      pre[g].resize(n);
      for (std::size_t i = 0; i < n; ++i) pre[g][i] = a[i] + b[i] + bs[g][i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = oracle::sigmoid(pre[1][i]) * c[i] + oracle::sigmoid(pre[0][i]) * std::tanh(pre[3][i]);
      h[i] = oracle::sigmoid(pre[2][i]) * std::tanh(c[i]);
    }
  }
  EXPECT_LE(oracle::max_diff(lstm_forward(xs, w).value().storage(), h), 1e-14);
}

TEST(PreCombine, WeightedSum) {
  Tape t;
  Var x = t.constant(Tensor::vector({1, -2, 0.5}));
  Var zero = t.constant(Tensor(Shape{3}, 0.0));
  EXPECT_EQ(pre_combine(x, t.constant(Tensor::vector({9, 9, 9})), 0.0).value(), x.value());
  EXPECT_EQ(pre_combine(x, zero, 1.0).value(), x.value());
  EXPECT_EQ(pre_combine(x, x, 2.0).value(), Tensor::vector({3, -6, 1.5}));
  EXPECT_EQ(pre_combine(std::nullopt, x, 2.0).value(), Tensor::vector({2, -4, 1}));
  EXPECT_EQ(pre_combine(x, std::nullopt, 2.0).value(), x.value());
  EXPECT_THROW(pre_combine(std::nullopt, std::nullopt, 1.0), Error);
}

TEST(Fuse, AffineTanh) {
  Rng rng(12);
  Tape t;
  const Mat w = oracle::random_mat(6, 3, rng);
  const oracle::Vec b = oracle::random_mat(1, 3, rng)[0];
  const oracle::Vec d = oracle::random_mat(1, 3, rng)[0], p = oracle::random_mat(1, 3, rng)[0];
  Var wv = t.constant(oracle::to_tensor(w)), bv = t.constant(Tensor::vector(b));
  Var dv = t.constant(Tensor::vector(d)), pv = t.constant(Tensor::vector(p));
  oracle::Vec cat = d;
  cat.insert(cat.end(), p.begin(), p.end());
  oracle::Vec expected = oracle::vec_mat(cat, w);
  for (std::size_t i = 0; i < 3; ++i) expected[i] = std::tanh(expected[i] + b[i]);
  EXPECT_LE(oracle::max_diff(fuse_patient_state(dv, pv, wv, bv).value().storage(), expected), 1e-15);
  EXPECT_GT(max_abs_diff(fuse_patient_state(dv, pv, wv, bv).value(),
                         fuse_patient_state(pv, dv, wv, bv).value()), 1e-6);
  Var zw = t.constant(Tensor(Shape{6, 3}, 0.0)), zb = t.constant(Tensor(Shape{3}, 0.0));
  EXPECT_EQ(fuse_patient_state(dv, pv, zw, zb).value(), Tensor(Shape{3}, 0.0));
}

}  // namespace
}  // namespace algnet
