#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstdint>

#include "gandyn/autodiff.hpp"
#include "gandyn/gradcheck_suites.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/rng.hpp"

namespace gandyn {
namespace {

double eval1(const Graph& g, NodeId out, const TensorMap& bindings) {
  const NodeId outs[] = {out};
  return evaluate(g, bindings, outs)[0].item();
}

TEST(Evaluate, LeakyReluNegativeSide) {
  Graph g;
  Var x = variable(g, "x", {});
  EXPECT_DOUBLE_EQ(eval1(g, leaky_relu(x, 0.2).id, {{"x", Tensor::scalar(-2.0)}}), -0.4);
}

TEST(Evaluate, SquareByMultiplication) {
  Graph g;
  Var x = variable(g, "x", {});
  EXPECT_EQ(eval1(g, (x * x).id, {{"x", Tensor::scalar(3.0)}}), 9.0);
}

TEST(Evaluate, BilinearKeepsConstantImages) {
  for (auto factor : {Resampling::kUp2, Resampling::kDown2}) {
    Graph g;
    Var x = variable(g, "x", {1, 2, 4, 4});
    const NodeId outs[] = {bilinear_resample(x, factor).id};
    const Tensor y = evaluate(g, {{"x", Tensor({1, 2, 4, 4}, 1.25)}}, outs)[0];
    for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.25);
  }
}

TEST(Evaluate, ShapeMismatchNamesTheNode) {
  Graph g;
  Var a = variable(g, "a", {2});
  Var b = variable(g, "b", {3});
  try {
    (void)(a + b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_EQ(e.node(), g.size());
  }
}

TEST(Evaluate, NonFiniteValueCarriesNodeId) {
  Graph g;
  Var x = variable(g, "x", {2});
  Var y = log(x);
  Var out = sum(y);
  const NodeId outs[] = {out.id};
  try {
    evaluate(g, {{"x", Tensor({2}, std::vector<double>{1.0, -1.0})}}, outs);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.node(), y.id);
  }
}

TEST(Evaluate, UnboundLeafIsAContractError) {
  Graph g;
  Var x = variable(g, "x", {});
  const NodeId outs[] = {square(x).id};
  EXPECT_THROW(evaluate(g, {}, outs), ContractError);
}

TEST(Evaluate, ReplayIsBitIdentical) {
  Rng rng(5);
  Graph g;
  Var x = variable(g, "x", {4, 3});
  Var w = variable(g, "w", {3, 2});
  Var out = mean(softplus(matmul(x, w)) * sigmoid(matmul(x, w)));
  TensorMap b;
  Tensor xv({4, 3}), wv({3, 2});
  for (double& v : xv.data()) v = rng.uniform() - 0.5;
  for (double& v : wv.data()) v = rng.uniform() - 0.5;
  b.emplace("x", xv);
  b.emplace("w", wv);
  const double first = eval1(g, out.id, b);
  const double second = eval1(g, out.id, b);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(first), std::bit_cast<std::uint64_t>(second));
}

TEST(Gradient, SquareAtThree) {
  Graph g;
  Var x = variable(g, "x", {});
  const GradientGraph gg = gradient(g, square(x).id, {"x"});
  EXPECT_DOUBLE_EQ(eval1(gg.graph, gg.grads.at("x"), {{"x", Tensor::scalar(3.0)}}), 6.0);
}

TEST(Gradient, SecondDerivativeOfLogisticAtZero) {
  Graph g;
  Var t = variable(g, "t", {});
  Var f1 = grad(f_logistic(t), t);
  Var f2 = grad(f1, t);
  EXPECT_NEAR(eval1(g, f1.id, {{"t", Tensor::scalar(0.0)}}), 0.5, 1e-15);
  EXPECT_NEAR(eval1(g, f2.id, {{"t", Tensor::scalar(0.0)}}), -0.25, 1e-15);
}

TEST(Gradient, PenaltyOfLinearMapDifferentiatesToTwoPsi) {
  Graph g;
  Var x = variable(g, "x", {});
  Var psi = variable(g, "psi", {});
  Var gx = grad(psi * x, x);
  Var penalty = square(gx);
  Var dpsi = grad(penalty, psi);
  for (double p : {-1.5, 0.0, 0.7, 3.0}) {
    EXPECT_NEAR(eval1(g, dpsi.id, {{"x", Tensor::scalar(0.4)}, {"psi", Tensor::scalar(p)}}), 2.0 * p, 1e-14);
  }
}

TEST(Gradient, ReturnsANewGraph) {
  Graph g;
  Var x = variable(g, "x", {});
  const NodeId out = (x * x * x).id;
  const std::size_t before = g.size();
  const GradientGraph gg = gradient(g, out, {"x"});
  EXPECT_EQ(g.size(), before);
  EXPECT_GT(gg.graph.size(), before);
  // ... and the new graph can be differentiated again.
  const GradientGraph gg2 = gradient(gg.graph, gg.grads.at("x"), {"x"});
  EXPECT_NEAR(eval1(gg2.graph, gg2.grads.at("x"), {{"x", Tensor::scalar(2.0)}}), 12.0, 1e-12);
}

TEST(Gradient, NonScalarOutputIsRejected) {
  Graph g;
  Var x = variable(g, "x", {3});
  EXPECT_THROW(gradient(g, square(x).id, {"x"}), ContractError);
}

TEST(Gradient, StopGradientBlocksFlow) {
  Graph g;
  Var x = variable(g, "x", {});
  Var y = stop_gradient(x) * x;
  EXPECT_DOUBLE_EQ(eval1(g, grad(y, x).id, {{"x", Tensor::scalar(1.5)}}), 1.5);
}

TEST(Gradient, LeakyReluHasZeroSecondDerivative) {
  Graph g;
  Var x = variable(g, "x", {});
  Var d2 = grad(grad(leaky_relu(x), x), x);
  for (double v : {-1.0, 0.0, 1.0}) EXPECT_EQ(eval1(g, d2.id, {{"x", Tensor::scalar(v)}}), 0.0);
  // Subgradient at 0 is the negative-side slope.
  EXPECT_DOUBLE_EQ(eval1(g, grad(leaky_relu(x), x).id, {{"x", Tensor::scalar(0.0)}}), 0.2);
}

TEST(Gradient, IsLinearInTheObjective) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Graph g;
    Var x = variable(g, "x", {3, 2});
    Var f = sum(softplus(x) * exp(0.3 * x));
    Var h = mean(square(sigmoid(x)));
    const double a = rng.uniform() * 4 - 2, b = rng.uniform() * 4 - 2;
    Var combo = a * f + b * h;
    Var gf = grad(f, x), gh = grad(h, x), gc = grad(combo, x);
    Tensor xv({3, 2});
    for (double& v : xv.data()) v = rng.uniform() * 2 - 1;
    const NodeId outs[] = {gf.id, gh.id, gc.id};
    const auto r = evaluate(g, {{"x", xv}}, outs);
    for (std::size_t i = 0; i < xv.size(); ++i) EXPECT_NEAR(r[2][i], a * r[0][i] + b * r[1][i], 1e-12);
  }
}

// Random chains of up to six smooth unary primitives applied to x.
TEST(Gradient, RandomCompositionsMatchCentralDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    Graph g;
    Var x = variable(g, "x", {4});
    Var y = x;
    const int depth = 1 + static_cast<int>(rng.uniform() * 6);
    for (int k = 0; k < depth; ++k) {
      switch (static_cast<int>(rng.uniform() * 6)) {
        case 0: y = softplus(y); break;
        case 1: y = sigmoid(y); break;
        case 2: y = exp(0.5 * y); break;
        case 3: y = square(y) + 0.5; break;
        case 4: y = y * x; break;
        default: y = log(square(y) + 1.0); break;
      }
    }
    const NodeId out = sum(y).id;
    Tensor xv({4});
    for (double& v : xv.data()) v = rng.uniform() * 2 - 1;
    EXPECT_LT(grad_check(g, out, {{"x", xv}}, 1e-5).max_error, 1e-6) << "trial " << trial;
  }
}

TEST(GradCheck, CubeAtOnePointSeven) {
  Graph g;
  Var x = variable(g, "x", {});
  const auto r = grad_check(g, (x * x * x).id, {{"x", Tensor::scalar(1.7)}}, 1e-5);
  EXPECT_LT(r.max_error, 1e-8);
  EXPECT_EQ(r.worst_variable, "x");
}

TEST(GradCheck, ReportsAWrongGradient) {
  // stop_gradient hides half of d/dx(x*x), so the check must flag it.
  Graph g;
  Var x = variable(g, "x", {});
  const auto r = grad_check(g, (stop_gradient(x) * x).id, {{"x", Tensor::scalar(2.0)}}, 1e-5);
  EXPECT_NEAR(r.max_error, 1.0, 1e-6);  // |2 - 4| / 2
}

class Suite : public ::testing::TestWithParam<std::string> {};

TEST_P(Suite, EveryCaseIsBelowItsThreshold) {
  for (const auto& c : run_gradcheck_suite(GetParam())) {
    EXPECT_TRUE(c.passed()) << c.suite << "/" << c.name << ": " << c.error << " >= " << c.threshold;
  }
}

INSTANTIATE_TEST_SUITE_P(GradCheckSuites, Suite, ::testing::Values("primitives", "composed", "penalties", "models"));

TEST(GradCheckSuites, UnknownNameIsRejected) { EXPECT_THROW(run_gradcheck_suite("nope"), ContractError); }

}  // namespace
}  // namespace gandyn
