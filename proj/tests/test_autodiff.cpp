#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "algnet/autodiff.hpp"
#include "algnet/recurrent.hpp"
#include "test_util.hpp"

namespace algnet {
namespace {

using testing::check_op;
using testing::random_tensor;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), ShapeError);
  EXPECT_EQ(Tensor(Shape{2, 3}).size(), 6u);
  EXPECT_EQ(Tensor::scalar(4.0).item(), 4.0);
  EXPECT_THROW(Tensor::vector({1, 2}).item(), ShapeError);
  EXPECT_THROW(Tensor::matrix({{1, 2}, {3}}), ShapeError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape t;
  const Tensor b = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  Var out = matmul(t.constant(Tensor::matrix({{1, 0}, {0, 1}})), t.constant(b));
  EXPECT_EQ(out.value(), b);
}

TEST(Matmul, HandWorkedProduct) {
  Tape t;
  Var out = matmul(t.constant(Tensor::matrix({{1, 2}, {3, 4}})), t.constant(Tensor::matrix({{1}, {1}})));
  EXPECT_EQ(out.value(), Tensor::matrix({{3}, {7}}));
}

TEST(Matmul, ZeroMatrixGivesZero) {
  Tape t;
  Var out = matmul(t.constant(Tensor(Shape{3, 2}, 0.0)), t.constant(Tensor::matrix({{1, 2}, {3, 4}})));
  EXPECT_EQ(out.value(), Tensor(Shape{3, 2}, 0.0));
}

TEST(Matmul, VectorConventions) {
  Tape t;
  Var m = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var v = t.constant(Tensor::vector({1, 1}));
  EXPECT_EQ(matmul(v, m).value(), Tensor::vector({4, 6}));
  EXPECT_EQ(matmul(m, v).value(), Tensor::vector({3, 7}));
  EXPECT_EQ(matmul(v, v).value().item(), 2.0);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tape t;
  try {
    matmul(t.constant(Tensor(Shape{2, 3})), t.constant(Tensor(Shape{2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, ClosedFormRows) {
  Tape t;
  EXPECT_EQ(softmax_rows(t.constant(Tensor::vector({0, 0}))).value(), Tensor::vector({0.5, 0.5}));
  for (double c : {-40.0, 0.0, 3.5, 700.0}) {
    const Tensor s = softmax_rows(t.constant(Tensor::vector({c, c, c, c}))).value();
    for (double v : s.data()) EXPECT_DOUBLE_EQ(v, 0.25);
  }
  const Tensor s = softmax_rows(t.constant(Tensor::vector({std::log(1.0), std::log(3.0)}))).value();
  EXPECT_NEAR(s[0], 0.25, 1e-15);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndIgnoreShift) {
  Rng rng(3);
  Tape t;
  const Tensor x = random_tensor({5, 7}, rng, -50, 50);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 7; ++c) shifted.at(r, c) += 10.0 * static_cast<double>(r);
  const Tensor a = softmax_rows(t.constant(x)).value();
  const Tensor b = softmax_rows(t.constant(shifted)).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += a.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_LT(max_abs_diff(a, b), 1e-12);
}

TEST(Elementwise, SimpleValues) {
  Tape t;
  EXPECT_EQ(sigmoid(t.constant(Tensor::vector({0}))).value()[0], 0.5);
  EXPECT_EQ(algnet::tanh(t.constant(Tensor::vector({0}))).value()[0], 0.0);
  EXPECT_EQ(concat({t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({3}))}, 0).value(),
            Tensor::vector({1, 2, 3}));
}

TEST(Elementwise, ConcatAxisMismatchThrows) {
  Tape t;
  Var a = t.constant(Tensor(Shape{2, 3}));
  Var b = t.constant(Tensor(Shape{3, 3}));
  EXPECT_THROW(concat({a, b}, 1), ShapeError);
  EXPECT_NO_THROW(concat({a, b}, 0));
}

TEST(Elementwise, LargeInputsStayFinite) {
  Tape t;
  Var x = t.constant(Tensor::vector({-50, -20, 0, 20, 50}));
  EXPECT_TRUE(sigmoid(x).value().all_finite());
  EXPECT_TRUE(algnet::tanh(x).value().all_finite());
  EXPECT_TRUE(softmax_rows(x).value().all_finite());
}

TEST(Tape, NonFiniteValueIsAnError) {
  Tape t;
  Var x = t.constant(Tensor::vector({std::numeric_limits<double>::max()}));
  EXPECT_THROW(add(x, x), NumericError);
}

TEST(Tape, BackwardNeedsScalar) {
  Tape t;
  Var x = t.variable(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(scale(x, 2.0)), ShapeError);
}

TEST(Backward, SumGivesOnes) {
  ParamStore ps;
  ps.add("w", Tensor::matrix({{1, -2}, {3, 0.5}}));
  Tape t;
  t.backward(sum(t.param(ps, "w")));
  EXPECT_EQ(ps.get("w").grad, Tensor(Shape{2, 2}, 1.0));
}

TEST(Backward, HalfSquaredNormGivesW) {
  ParamStore ps;
  const Tensor w = Tensor::matrix({{1, -2}, {3, 0.5}});
  ps.add("w", w);
  Tape t;
  Var v = t.param(ps, "w");
  t.backward(scale(sum(mul(v, v)), 0.5));
  EXPECT_EQ(ps.get("w").grad, w);
}

TEST(Backward, UnreachedParameterHasZeroGradient) {
  ParamStore ps;
  ps.add("used", Tensor::vector({1, 2}));
  ps.add("unused", Tensor::vector({3, 4}));
  Tape t;
  t.param(ps, "unused");
  t.backward(sum(t.param(ps, "used")));
  EXPECT_EQ(ps.get("unused").grad, Tensor(Shape{2}, 0.0));
}

TEST(EmbeddingSum, SelectsAndSumsRows) {
  Tape t;
  const Tensor table = Tensor::matrix({{1, 2}, {10, 20}, {100, 200}});
  Var tab = t.constant(table);
  const std::vector<std::size_t> zero{0}, both{0, 1}, bad{3};
  EXPECT_EQ(embedding_sum(tab, zero).value(), Tensor::vector({1, 2}));
  EXPECT_EQ(embedding_sum(tab, both).value(), Tensor::vector({11, 22}));
  EXPECT_THROW(embedding_sum(tab, bad), Error);
}

TEST(EmbeddingSum, GradientScattersToSelectedRows) {
  ParamStore ps;
  ps.add("table", Tensor(Shape{4, 3}, 0.3));
  const std::vector<std::size_t> idx{1, 3};
  const LossClosure loss = [&](Tape& t, ParamStore& p) {
    return sum(embedding_sum(t.param(p, "table"), idx));
  };
  {
    Tape t;
    t.backward(loss(t, ps));
  }
  const Tensor expected = Tensor::matrix({{0, 0, 0}, {1, 1, 1}, {0, 0, 0}, {1, 1, 1}});
  EXPECT_EQ(ps.get("table").grad, expected);
  EXPECT_TRUE(grad_check(loss, ps).passed());
}

// Finite-difference checks of every op on random inputs in [-1, 1].

TEST(OpGradients, MatchFiniteDifferences) {
  Rng rng(11);
  auto r = [&](Shape s) { return random_tensor(std::move(s), rng); };
  const std::vector<std::size_t> idx{0, 2, 3};
  struct Case {
    const char* name;
    GradCheckReport report;
  };
  std::vector<Case> cases;
  auto run = [&](const char* name, std::vector<Tensor> in, auto f) {
    cases.push_back({name, check_op(std::move(in), f)});
  };
  run("add", {r({3, 4}), r({3, 4})}, [](auto& x) { return add(x[0], x[1]); });
  run("sub", {r({5}), r({5})}, [](auto& x) { return sub(x[0], x[1]); });
  run("mul", {r({3, 4}), r({3, 4})}, [](auto& x) { return mul(x[0], x[1]); });
  run("scale", {r({4})}, [](auto& x) { return scale(x[0], -1.7); });
  run("add_n", {r({4}), r({4}), r({4})}, [](auto& x) { return add_n(x); });
  run("sigmoid", {r({6})}, [](auto& x) { return sigmoid(x[0]); });
  run("tanh", {r({6})}, [](auto& x) { return algnet::tanh(x[0]); });
  run("relu", {r({6})}, [](auto& x) { return relu(x[0]); });
  run("matmul mm", {r({3, 4}), r({4, 2})}, [](auto& x) { return matmul(x[0], x[1]); });
  run("matmul vm", {r({4}), r({4, 3})}, [](auto& x) { return matmul(x[0], x[1]); });
  run("matmul mv", {r({3, 4}), r({4})}, [](auto& x) { return matmul(x[0], x[1]); });
  run("matmul vv", {r({4}), r({4})}, [](auto& x) { return matmul(x[0], x[1]); });
  run("transpose", {r({3, 5})}, [](auto& x) { return transpose(x[0]); });
  run("concat v", {r({2}), r({3})}, [](auto& x) { return concat(x, 0); });
  run("concat rows", {r({2, 3}), r({1, 3})}, [](auto& x) { return concat(x, 0); });
  run("concat cols", {r({2, 3}), r({2, 1})}, [](auto& x) { return concat(x, 1); });
  run("stack_rows", {r({3}), r({3})}, [](auto& x) { return stack_rows(x); });
  run("row", {r({3, 4})}, [](auto& x) { return row(x[0], 1); });
  run("slice_cols", {r({3, 6})}, [](auto& x) { return slice_cols(x[0], 2, 3); });
  run("embedding_sum", {r({5, 3})}, [&](auto& x) { return embedding_sum(x[0], idx); });
  run("sum", {r({3, 2})}, [](auto& x) { return sum(x[0]); });
  run("mean_rows", {r({4, 3})}, [](auto& x) { return mean_rows(x[0]); });
  run("softmax vec", {r({5})}, [](auto& x) { return softmax_rows(x[0]); });
  run("softmax mat", {r({3, 4})}, [](auto& x) { return softmax_rows(x[0]); });
  run("affine", {r({4}), r({4, 3}), r({3})}, [](auto& x) { return affine(x[0], x[1], x[2]); });
  for (const auto& c : cases) {
    EXPECT_TRUE(c.report.passed()) << c.name << " max rel error " << c.report.max_rel_error();
  }
}

TEST(GradCheck, QuadraticClosureIsTight) {
  ParamStore ps;
  Rng rng(2);
  ps.add("w", random_tensor({4, 3}, rng));
  const LossClosure loss = [](Tape& t, ParamStore& p) {
    Var w = t.param(p, "w");
    return scale(sum(mul(w, w)), 1.5);
  };
  GradCheckOptions opts;
  opts.tolerance = 1e-8;
  const auto report = grad_check(loss, ps, opts);
  EXPECT_TRUE(report.passed()) << report.max_rel_error();
}

TEST(GradCheck, ReportsWrongGradient) {
  ParamStore ps;
  ps.add("w", Tensor::vector({0.3, -0.4}));
  // Backward deliberately scaled by 2.
  const LossClosure loss = [](Tape& t, ParamStore& p) {
    Var w = t.param(p, "w");
    Var s = sum(w);
    return t.record("bad", s.value(), {s}, [s](Tape& tape, const Tensor& g) {
      tape.grad_buffer(s)[0] += 2.0 * g[0];
    });
  };
  const auto report = grad_check(loss, ps);
  EXPECT_FALSE(report.passed());
  EXPECT_NEAR(report.entries.at(0).max_rel_error, 0.5, 1e-6);
}

TEST(Recurrent, ZeroWeightGruKeepsZeroState) {
  Tape t;
  Var z = t.constant(Tensor(Shape{4, 4}, 0.0));
  Var b = t.constant(Tensor(Shape{4}, 0.0));
  GruWeights w{z, z, b, z, z, b, z, z, b};
  Var h = gru_cell(t.constant(Tensor::vector({1, -2, 3, 0.5})), t.constant(Tensor(Shape{4}, 0.0)), w);
  EXPECT_EQ(h.value(), Tensor(Shape{4}, 0.0));
}

TEST(Recurrent, ClosedUpdateGateKeepsState) {
  Rng rng(4);
  Tape t;
  auto r = [&](Shape s) { return t.constant(random_tensor(std::move(s), rng)); };
  GruWeights w{r({4, 4}), r({4, 4}), t.constant(Tensor(Shape{4}, -60.0)),
               r({4, 4}), r({4, 4}), r({4}),
               r({4, 4}), r({4, 4}), r({4})};
  const Tensor h0 = random_tensor({4}, rng);
  Var h = gru_cell(r({4}), t.constant(h0), w);
  EXPECT_LT(max_abs_diff(h.value(), h0), 1e-20);
}

TEST(Recurrent, CellShapeMismatchThrows) {
  Tape t;
  Var m = t.constant(Tensor(Shape{4, 4}));
  Var b = t.constant(Tensor(Shape{4}));
  GruWeights w{m, m, b, m, m, b, m, m, b};
  EXPECT_THROW(gru_cell(t.constant(Tensor(Shape{3})), t.constant(Tensor(Shape{4})), w), ShapeError);
}

TEST(Recurrent, CellGradientsMatchFiniteDifferences) {
  Rng rng(8);
  std::vector<Tensor> gru_in{random_tensor({3}, rng), random_tensor({3}, rng)};
  for (int k = 0; k < 3; ++k) {
    gru_in.push_back(random_tensor({3, 3}, rng));
    gru_in.push_back(random_tensor({3, 3}, rng));
    gru_in.push_back(random_tensor({3}, rng));
  }
  const auto gru = check_op(gru_in, [](auto& x) {
    GruWeights w{x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10]};
    return gru_cell(x[0], x[1], w);
  });
  EXPECT_TRUE(gru.passed()) << gru.max_rel_error();

  std::vector<Tensor> lstm_in{random_tensor({3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)};
  for (int k = 0; k < 4; ++k) {
    lstm_in.push_back(random_tensor({3, 3}, rng));
    lstm_in.push_back(random_tensor({3, 3}, rng));
    lstm_in.push_back(random_tensor({3}, rng));
  }
  const auto lstm = check_op(lstm_in, [](auto& x) {
    LstmWeights w{x[3], x[4], x[5], x[6], x[7], x[8], x[9], x[10], x[11], x[12], x[13], x[14]};
    LstmState s = lstm_cell(x[0], {x[1], x[2]}, w);
    return concat({s.h, s.c}, 0);
  });
  EXPECT_TRUE(lstm.passed()) << lstm.max_rel_error();
}

TEST(Determinism, ForwardIsBitwiseRepeatable) {
  auto run = [] {
    Rng rng(21);
    Tape t;
    Var a = t.constant(random_tensor({6, 5}, rng));
    Var b = t.constant(random_tensor({5, 4}, rng));
    return softmax_rows(algnet::tanh(matmul(a, b))).value();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace algnet
