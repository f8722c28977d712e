#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "gandyn/autodiff.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/models.hpp"
#include "gandyn/rng.hpp"

namespace gandyn {
namespace {

const double kLn2 = std::log(2.0);

double eval1(const Graph& g, NodeId out, const TensorMap& bindings) {
  const NodeId outs[] = {out};
  return evaluate(g, bindings, outs)[0].item();
}

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n, 1}, std::move(v));
}

ParamSet scalar_param(std::string name, double v) {
  ParamSet p;
  p.emplace(std::move(name), Tensor({1}, std::vector<double>{v}));
  return p;
}

TEST(Logistic, Values) {
  EXPECT_NEAR(f_logistic(0.0), -kLn2, 1e-15);
  // -log1p(e^-20), not -e^-20: the second-order term is 2e-18.
  EXPECT_NEAR(f_logistic(20.0), -2.061153620314381e-9, 1e-22);
  EXPECT_NEAR(f_logistic_prime(0.0), 0.5, 1e-15);
  EXPECT_NEAR(f_logistic_second(0.0), -0.25, 1e-15);
  // Stable far out in both tails.
  EXPECT_DOUBLE_EQ(f_logistic(-800.0), -800.0);
  EXPECT_EQ(f_logistic(800.0), -0.0);
}

TEST(Logistic, GraphFormMatchesScalarForm) {
  Graph g;
  Var t = variable(g, "t", {});
  Var f = f_logistic(t);
  Var f1 = grad(f, t);
  Var f2 = grad(f1, t);
  for (double v : {-30.0, -1.0, 0.3, 2.0, 40.0}) {
    const TensorMap b{{"t", Tensor::scalar(v)}};
    EXPECT_NEAR(eval1(g, f.id, b), f_logistic(v), 1e-14);
    EXPECT_NEAR(eval1(g, f1.id, b), f_logistic_prime(v), 1e-14);
    EXPECT_NEAR(eval1(g, f2.id, b), f_logistic_second(v), 1e-14);
  }
}

TEST(Logistic, MonotoneAndBoundedAboveByZero) {
  double prev = f_logistic(-50.0);
  for (double t = -49.5; t <= 50.0; t += 0.5) {
    const double v = f_logistic(t);
    EXPECT_GT(v, prev);
    EXPECT_LE(v, 0.0);
    prev = v;
  }
}

TEST(GanValue, Examples) {
  const double zero[] = {0.0};
  EXPECT_NEAR(gan_value(zero, zero), -2.0 * kLn2, 1e-15);
  const double plus[] = {20.0}, minus[] = {-20.0};
  EXPECT_NEAR(gan_value(/*d_real=*/minus, /*d_fake=*/plus), -4.122307240628762e-9, 1e-21);
  EXPECT_NEAR(gan_value(/*d_real=*/plus, /*d_fake=*/minus), -40.0, 1e-8);
}

TEST(GanValue, LengthMismatch) {
  const double a[] = {0.0}, b[] = {0.0, 1.0};
  EXPECT_THROW(gan_value(a, b), ContractError);
}

TEST(RpganValue, Examples) {
  const double d[] = {-3.0, 0.1, 7.0};
  EXPECT_NEAR(rpgan_value(d, d), -kLn2, 1e-15);
  const double fake[] = {1.0}, real[] = {0.0};
  EXPECT_NEAR(rpgan_value(fake, real), -0.31326168751822286, 1e-15);
  const double a[] = {0.0}, b[] = {0.0, 1.0};
  EXPECT_THROW(rpgan_value(a, b), ContractError);
}

TEST(RpganValue, ShiftInvarianceDistinguishesFromClassic) {
  Rng rng(1);
  Graph g;
  Var fake = variable(g, "fake", {5});
  Var real = variable(g, "real", {5});
  Var c = constant(g, Tensor::scalar(2.75));
  Var rp = rpgan_value(fake, real), rp_shift = rpgan_value(fake + c, real + c);
  Var gan = gan_value(real, fake), gan_shift = gan_value(real + c, fake + c);
  Tensor fv({5}), rv({5});
  for (double& v : fv.data()) v = 4 * rng.uniform() - 2;
  for (double& v : rv.data()) v = 4 * rng.uniform() - 2;
  const TensorMap b{{"fake", fv}, {"real", rv}};
  EXPECT_NEAR(eval1(g, rp.id, b), eval1(g, rp_shift.id, b), 1e-12);
  EXPECT_GT(std::abs(eval1(g, gan.id, b) - eval1(g, gan_shift.id, b)), 1e-3);
}

TEST(R1Penalty, LinearCritic) {
  LinearCritic d(1);
  Graph g;
  Var x = variable(g, "x", {4, 1});
  Var r1 = r1_penalty(d, "D.", x, 2.0);
  TensorMap b = prefixed(scalar_param("psi", 3.0), "D.");
  b.emplace("x", column({-1.0, 0.5, 2.0, 9.0}));
  EXPECT_NEAR(eval1(g, r1.id, b), 9.0, 1e-12);
}

TEST(R1Penalty, ConstantCriticAndZeroGamma) {
  QuadraticCritic d(1);  // psi = 0 makes it constant
  Graph g;
  Var x = variable(g, "x", {3, 1});
  Var r1 = r1_penalty(d, "D.", x, 5.0);
  TensorMap b = prefixed(scalar_param("psi", 0.0), "D.");
  b.emplace("x", column({1.0, 2.0, 3.0}));
  EXPECT_EQ(eval1(g, r1.id, b), 0.0);

  Graph g2;
  Var x2 = variable(g2, "x", {3, 1});
  Var r1z = r1_penalty(d, "D.", x2, 0.0);
  TensorMap b2 = prefixed(scalar_param("psi", 4.0), "D.");
  b2.emplace("x", column({1.0, 2.0, 3.0}));
  EXPECT_EQ(eval1(g2, r1z.id, b2), 0.0);
}

TEST(R2Penalty, MirrorsR1OnFakes) {
  // D(x) = psi x with generator output theta: R2 = (gamma / 2) psi^2.
  DiracGenerator gen(1, 1);
  LinearCritic d(1);
  Graph g;
  Var z = variable(g, "z", {3, 1});
  Var fakes = gen.forward(g, z, "G.");
  Var r2 = r2_penalty(d, "D.", fakes, 2.0);
  TensorMap b = prefixed(scalar_param("psi", 3.0), "D.");
  b.merge(prefixed(scalar_param("theta", 0.7), "G."));
  b.emplace("z", Tensor({3, 1}));
  EXPECT_NEAR(eval1(g, r2.id, b), 9.0, 1e-12);
  // Constant critic and zero gamma.
  b.at("D.psi") = Tensor({1}, 0.0);
  EXPECT_EQ(eval1(g, r2.id, b), 0.0);
  Var r2z = r2_penalty(d, "D.", fakes, 0.0);
  b.at("D.psi") = Tensor({1}, 3.0);
  EXPECT_EQ(eval1(g, r2z.id, b), 0.0);
}

TEST(R2Penalty, QuadraticCriticAtTwo) {
  QuadraticCritic d(1);
  Graph g;
  Var x = variable(g, "x_fake", {2, 1});
  Var r2 = r2_penalty(d, "D.", x, 1.0);
  for (double psi : {-1.0, 0.5, 2.0}) {
    TensorMap b = prefixed(scalar_param("psi", psi), "D.");
    b.emplace("x_fake", column({2.0, 2.0}));
    EXPECT_NEAR(eval1(g, r2.id, b), 8.0 * psi * psi, 1e-12);
  }
}

TEST(R2Penalty, EqualsR1OnTheSameBatch) {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden = {6};
  spec.output_dim = 1;
  spec.scalar_output = true;
  const Model d = build_mlp(spec, 3);
  Graph g;
  Var x = variable(g, "x", {5, 2});
  Var r1 = r1_penalty(*d.net, "D.", x, 0.7);
  Var r2 = r2_penalty(*d.net, "D.", x, 0.7);
  TensorMap b = prefixed(d.params, "D.");
  Rng rng(2);
  Tensor xv({5, 2});
  for (double& v : xv.data()) v = rng.uniform() * 2 - 1;
  b.emplace("x", xv);
  EXPECT_EQ(eval1(g, r1.id, b), eval1(g, r2.id, b));
}

TEST(R2Penalty, BlocksGeneratorGradient) {
  DiracGenerator gen(1, 1);
  QuadraticCritic d(1);
  Graph g;
  Var z = variable(g, "z", {2, 1});
  Var r2 = r2_penalty(d, "D.", gen.forward(g, z, "G."), 1.0);
  const GradientGraph gg = gradient(g, r2.id, {"G.theta", "D.psi"});
  TensorMap b = prefixed(scalar_param("psi", 1.5), "D.");
  b.merge(prefixed(scalar_param("theta", 2.0), "G."));
  b.emplace("z", Tensor({2, 1}));
  const NodeId outs[] = {gg.grads.at("G.theta"), gg.grads.at("D.psi")};
  const auto r = evaluate(gg.graph, b, outs);
  EXPECT_EQ(r[0][0], 0.0);
  EXPECT_NEAR(r[1][0], 16.0 * 1.5, 1e-12);  // d/dpsi 8 psi^2
}

// Central differences on the penalty as a function of psi, with an explicit
// oracle rather than grad_check.
TEST(Penalties, PsiGradientOnRandomTwoLayerCritics) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    MlpSpec spec;
    spec.input_dim = 2;
    spec.hidden = {5, 5};
    spec.output_dim = 1;
    spec.scalar_output = true;
    Model d = build_mlp(spec, seed);
    Rng rng(seed + 100);
    for (auto& [name, t] : d.params)
      if (name.ends_with(".b")) for (double& v : t.data()) v = rng.uniform() - 0.5;
    Graph g;
    Var x = variable(g, "x", {4, 2});
    Var r1 = r1_penalty(*d.net, "D.", x, 1.3);
    const GradientGraph gg = gradient(g, r1.id, {"D.l0.w"});
    TensorMap b = prefixed(d.params, "D.");
    Tensor xv({4, 2});
    for (double& v : xv.data()) v = rng.uniform() * 2 - 1;
    b.emplace("x", xv);
    const NodeId gouts[] = {gg.grads.at("D.l0.w")};
    const Tensor analytic = evaluate(gg.graph, b, gouts)[0];
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double eps = 1e-5;
      TensorMap bp = b, bm = b;
      bp.at("D.l0.w")[i] += eps;
      bm.at("D.l0.w")[i] -= eps;
      const double numeric = (eval1(g, r1.id, bp) - eval1(g, r1.id, bm)) / (2 * eps);
      EXPECT_LT(std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])), 1e-5);
    }
  }
}

TEST(PlayerLosses, AllLogitsEqualIsZeroSum) {
  QuadraticCritic d(1);  // psi = 0: every logit is 0
  DiracGenerator gen(1, 1);
  const ObjectiveSpec spec{ObjectiveKind::kRpGan, 0.0, 0.0, 1, Pairing::kIndex};
  const Batch batch{column({0.5, -1.0, 2.0}), column({0.0, 0.0, 0.0})};
  const PlayerLosses pl = player_losses(spec, gen, d, batch, 0);
  const TensorMap b = loss_bindings(batch, scalar_param("theta", 0.3), scalar_param("psi", 0.0));
  EXPECT_NEAR(eval1(pl.graph, pl.loss_g, b), -kLn2, 1e-15);
  EXPECT_NEAR(eval1(pl.graph, pl.loss_d, b), kLn2, 1e-15);
}

TEST(PlayerLosses, ZeroSumWithoutPenalties) {
  MlpSpec gs;
  gs.input_dim = 3;
  gs.hidden = {4};
  gs.output_dim = 2;
  MlpSpec ds = gs;
  ds.input_dim = 2;
  ds.output_dim = 1;
  ds.scalar_output = true;
  const Model gen = build_mlp(gs, 1), d = build_mlp(ds, 2);
  Rng rng(3);
  Tensor reals({6, 2}), latents({6, 3});
  for (double& v : reals.data()) v = rng.uniform();
  for (double& v : latents.data()) v = rng.uniform();
  for (auto kind : {ObjectiveKind::kRpGan, ObjectiveKind::kClassicGan}) {
    const ObjectiveSpec spec{kind, 0.0, 0.0, 1, Pairing::kIndex};
    const PlayerLosses pl = player_losses(spec, *gen.net, *d.net, {reals, latents}, 0);
    const NodeId outs[] = {pl.loss_g, pl.loss_d};
    const auto r = evaluate(pl.graph, loss_bindings({reals, latents}, gen.params, d.params), outs);
    EXPECT_EQ(r[0].item() + r[1].item(), 0.0);
  }
}

TEST(PlayerLosses, ClassicIsGanValueWithSignFlip) {
  LinearCritic d(1);
  DiracGenerator gen(1, 1);
  const ObjectiveSpec spec{ObjectiveKind::kClassicGan, 0.0, 0.0, 1, Pairing::kIndex};
  const Batch batch{column({0.5, -1.0}), column({0.0, 0.0})};
  const PlayerLosses pl = player_losses(spec, gen, d, batch, 0);
  const TensorMap b = loss_bindings(batch, scalar_param("theta", 0.3), scalar_param("psi", -1.2));
  const double d_fake[] = {-1.2 * 0.3, -1.2 * 0.3}, d_real[] = {-1.2 * 0.5, -1.2 * -1.0};
  EXPECT_NEAR(eval1(pl.graph, pl.loss_g, b), gan_value(d_real, d_fake), 1e-15);
  EXPECT_NEAR(eval1(pl.graph, pl.loss_d, b), -gan_value(d_real, d_fake), 1e-15);
}

TEST(PlayerLosses, DiracInstanceMatchesClosedForm) {
  LinearCritic d(1);
  DiracGenerator gen(1, 1);
  const Batch batch{column({0.0}), column({0.0})};
  Rng rng(9);
  for (int i = 0; i < 5; ++i) {
    const double theta = 4 * rng.uniform() - 2, psi = 4 * rng.uniform() - 2, gamma = rng.uniform();
    const ObjectiveSpec spec{ObjectiveKind::kRpGan, gamma, 0.0, 1, Pairing::kIndex};
    const PlayerLosses pl = player_losses(spec, gen, d, batch, 0);
    const TensorMap b = loss_bindings(batch, scalar_param("theta", theta), scalar_param("psi", psi));
    EXPECT_NEAR(eval1(pl.graph, pl.loss_g, b), f_logistic(psi * theta), 1e-14);
    // D's loss adds R1 = (gamma / 2) psi^2 on the real sample.
    EXPECT_NEAR(eval1(pl.graph, pl.loss_d, b), -f_logistic(psi * theta) + 0.5 * gamma * psi * psi, 1e-14);
  }
}

TEST(PlayerLosses, LazyIntervalScalesAndSkips) {
  EXPECT_EQ(effective_gamma(0.5, 1, 7), 0.5);
  EXPECT_EQ(effective_gamma(0.5, 8, 0), 4.0);
  EXPECT_EQ(effective_gamma(0.5, 8, 3), 0.0);
  EXPECT_EQ(effective_gamma(0.5, 8, 16), 4.0);

  LinearCritic d(1);
  DiracGenerator gen(1, 1);
  const Batch batch{column({0.0}), column({0.0})};
  const ObjectiveSpec spec{ObjectiveKind::kRpGan, 1.0, 1.0, 4, Pairing::kIndex};
  const TensorMap b = loss_bindings(batch, scalar_param("theta", 0.0), scalar_param("psi", 2.0));
  const PlayerLosses on = player_losses(spec, gen, d, batch, 8);
  const PlayerLosses off = player_losses(spec, gen, d, batch, 9);
  EXPECT_NEAR(eval1(on.graph, on.r1, b), 0.5 * 4.0 * 4.0, 1e-12);
  EXPECT_EQ(eval1(off.graph, off.r1, b), 0.0);
  EXPECT_EQ(eval1(off.graph, off.r2, b), 0.0);
}

// The critic's descent direction is grad L - grad R1 - grad R2.
TEST(PlayerLosses, DescentDirectionComposesPerRegularizedField) {
  MlpSpec gs;
  gs.input_dim = 2;
  gs.hidden = {4};
  gs.output_dim = 2;
  MlpSpec ds = gs;
  ds.output_dim = 1;
  ds.scalar_output = true;
  const Model gen = build_mlp(gs, 4), d = build_mlp(ds, 5);
  Rng rng(6);
  Tensor reals({5, 2}), latents({5, 2});
  for (double& v : reals.data()) v = rng.uniform();
  for (double& v : latents.data()) v = rng.uniform();
  const ObjectiveSpec spec{ObjectiveKind::kRpGan, 0.8, 0.3, 1, Pairing::kIndex};
  const PlayerLosses pl = player_losses(spec, *gen.net, *d.net, {reals, latents}, 0);
  const TensorMap b = loss_bindings({reals, latents}, gen.params, d.params);
  std::vector<std::string> names;
  for (const auto& [name, t] : prefixed(d.params, "D.")) names.push_back(name);
  const auto grads_of = [&](NodeId out) {
    const GradientGraph gg = gradient(pl.graph, out, names);
    std::vector<NodeId> outs;
    for (const auto& n : names) outs.push_back(gg.grads.at(n));
    return evaluate(gg.graph, b, outs);
  };
  const auto gd = grads_of(pl.loss_d), gl = grads_of(pl.value), g1 = grads_of(pl.r1), g2 = grads_of(pl.r2);
  for (std::size_t k = 0; k < names.size(); ++k)
    for (std::size_t i = 0; i < gd[k].size(); ++i)
      EXPECT_NEAR(-gd[k][i], gl[k][i] - g1[k][i] - g2[k][i], 1e-10) << names[k];
}

TEST(ObjectiveSpec, Validation) {
  EXPECT_THROW((ObjectiveSpec{ObjectiveKind::kRpGan, -1.0, 0.0, 1, Pairing::kIndex}.validate()), ContractError);
  EXPECT_THROW((ObjectiveSpec{ObjectiveKind::kRpGan, 0.0, NAN, 1, Pairing::kIndex}.validate()), ContractError);
  EXPECT_THROW((ObjectiveSpec{ObjectiveKind::kRpGan, 0.0, 0.0, 0, Pairing::kIndex}.validate()), ContractError);
  EXPECT_EQ(parse_objective_kind("rpgan"), ObjectiveKind::kRpGan);
  EXPECT_EQ(parse_objective_kind("classic_gan"), ObjectiveKind::kClassicGan);
  EXPECT_THROW(parse_objective_kind("wgan"), ContractError);
}

TEST(Batch, PairingNeedsEqualSizes) {
  EXPECT_THROW((Batch{Tensor({3, 2}), Tensor({2, 2})}.validate()), ContractError);
  EXPECT_THROW((Batch{Tensor({0, 2}), Tensor({0, 2})}.validate()), ContractError);
  EXPECT_NO_THROW((Batch{Tensor({3, 2}), Tensor({3, 8})}.validate()));
}

}  // namespace
}  // namespace gandyn
