#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "gandyn/dirac.hpp"
#include "gandyn/errors.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/rng.hpp"

namespace gandyn {
namespace {

using cd = std::complex<double>;

double norm(const TrajectoryPoint& p) { return std::hypot(p.theta, p.psi); }

void expect_pair(const ComplexList& got, cd a, cd b, double tol) {
  ASSERT_EQ(got.size(), 2u);
  const bool direct = std::abs(got[0] - a) < tol && std::abs(got[1] - b) < tol;
  const bool swapped = std::abs(got[0] - b) < tol && std::abs(got[1] - a) < tol;
  EXPECT_TRUE(direct || swapped) << got[0] << " " << got[1];
}

TEST(VectorField, Examples) {
  Field2 v = vector_field({1.0, 0.0}, 0.0);
  EXPECT_DOUBLE_EQ(v[0], 0.0);
  EXPECT_DOUBLE_EQ(v[1], 0.5);
  v = vector_field({0.0, 1.0}, 1.0);
  EXPECT_DOUBLE_EQ(v[0], -0.5);
  EXPECT_DOUBLE_EQ(v[1], -1.0);
  for (double gamma : {0.0, 0.3, 7.0}) {
    v = vector_field({0.0, 0.0}, gamma);
    EXPECT_EQ(v[0], 0.0);
    EXPECT_EQ(v[1], 0.0);
  }
}

TEST(VectorField, MatchesDerivativesOfTheLoss) {
  // v = (-dL/dtheta, dL/dpsi - gamma psi) with L = f(psi theta).
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const double th = 4 * rng.uniform() - 2, ps = 4 * rng.uniform() - 2, gamma = rng.uniform();
    const double h = 1e-6;
    const double dth = (f_logistic(ps * (th + h)) - f_logistic(ps * (th - h))) / (2 * h);
    const double dps = (f_logistic((ps + h) * th) - f_logistic((ps - h) * th)) / (2 * h);
    const Field2 v = vector_field({th, ps}, gamma);
    EXPECT_NEAR(v[0], -dth, 1e-8);
    EXPECT_NEAR(v[1], dps - gamma * ps, 1e-8);
  }
}

TEST(Jacobian, AtEquilibrium) {
  Matrix j = jacobian({0.0, 0.0}, 0.0);
  EXPECT_EQ(j, Matrix(2, 2, {0.0, -0.5, 0.5, 0.0}));
  j = jacobian({0.0, 0.0}, 1.0);
  EXPECT_EQ(j, Matrix(2, 2, {0.0, -0.5, 0.5, -1.0}));
}

TEST(Jacobian, MatchesNumericalJacobianAtRandomStates) {
  Rng rng(2);
  for (double gamma : {0.0, 0.3, 2.0}) {
    const VectorField field = [gamma](std::span<const double> p) {
      const Field2 v = vector_field({p[0], p[1]}, gamma);
      return std::vector<double>{v[0], v[1]};
    };
    for (int i = 0; i < 20; ++i) {
      const double pt[] = {6 * rng.uniform() - 3, 6 * rng.uniform() - 3};
      const Matrix num = numerical_jacobian(field, pt);
      const Matrix ana = jacobian({pt[0], pt[1]}, gamma);
      for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(num(r, c), ana(r, c), 1e-6);
    }
  }
}

// The eigenvalues of [[0, -a], [a, -gamma]] with a = f'(0) = 1/2 solve
// lambda^2 + gamma lambda + a^2 = 0.
TEST(EquilibriumEigenvalues, ClosedForms) {
  expect_pair(equilibrium_eigenvalues(0.0), cd(0, 0.5), cd(0, -0.5), 1e-15);
  expect_pair(equilibrium_eigenvalues(1.0), cd(-0.5, 0), cd(-0.5, 0), 1e-15);
  expect_pair(equilibrium_eigenvalues(2.0), cd(-1 + std::sqrt(0.75), 0), cd(-1 - std::sqrt(0.75), 0), 1e-15);
  expect_pair(equilibrium_eigenvalues(0.5), cd(-0.25, std::sqrt(0.1875)), cd(-0.25, -std::sqrt(0.1875)), 1e-15);
}

TEST(EquilibriumEigenvalues, SolveTheCharacteristicPolynomial) {
  for (double gamma : {0.0, 0.1, 0.5, 0.99, 1.0, 1.01, 2.0, 10.0}) {
    for (const cd& l : equilibrium_eigenvalues(gamma)) {
      EXPECT_LT(std::abs(l * l + gamma * l + 0.25), 1e-12) << gamma;
      if (gamma > 0) EXPECT_LT(l.real(), 0.0);
      if (gamma == 0) EXPECT_EQ(l.real(), 0.0);
    }
  }
}

TEST(EquilibriumEigenvalues, MatchEigensolverOnAnalyticJacobian) {
  for (double gamma : {0.0, 0.1, 1.0, 10.0}) {
    ComplexList num = eigenvalues(jacobian({0.0, 0.0}, gamma));
    ComplexList ana = equilibrium_eigenvalues(gamma);
    const auto key = [](const cd& a, const cd& b) {
      return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    };
    std::sort(num.begin(), num.end(), key);
    std::sort(ana.begin(), ana.end(), key);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(std::abs(num[i] - ana[i]), 1e-9) << gamma;
  }
}

TEST(UpdateOperator, Examples) {
  UpdateOperatorSpectrum s = update_operator_eigs(0.0, 0.1);
  for (double m : s.moduli) EXPECT_NEAR(m, std::sqrt(1.0025), 1e-15);
  EXPECT_GT(s.max_modulus, 1.0);

  s = update_operator_eigs(1.0, 0.1);
  expect_pair(s.eigenvalues, cd(0.95, 0), cd(0.95, 0), 1e-15);
  EXPECT_LT(s.max_modulus, 1.0);

  EXPECT_THROW(update_operator_eigs(1.0, 0.0), ContractError);
}

TEST(UpdateOperator, SmallStepLimit) {
  double prev_unreg = 2.0, prev_reg = 0.0;
  for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const double unreg = update_operator_eigs(0.0, h).max_modulus;
    const double reg = update_operator_eigs(0.5, h).max_modulus;
    EXPECT_GT(unreg, 1.0);
    EXPECT_LT(unreg, prev_unreg);
    EXPECT_LT(reg, 1.0);
    EXPECT_GT(reg, prev_reg);
    prev_unreg = unreg;
    prev_reg = reg;
  }
  EXPECT_NEAR(prev_unreg, 1.0, 1e-8);
  EXPECT_NEAR(prev_reg, 1.0, 1e-4);
}

TEST(Simulate, OneEulerStep) {
  const Trajectory t = simulate({1.0, 0.0}, {0.0, 0.1, Integrator::kEulerSimultaneous, 1});
  ASSERT_EQ(t.points.size(), 2u);
  EXPECT_DOUBLE_EQ(t.points[1].theta, 1.0);
  EXPECT_DOUBLE_EQ(t.points[1].psi, 0.05);
  EXPECT_DOUBLE_EQ(t.points[0].radius, 0.5);
  EXPECT_DOUBLE_EQ(t.points[1].t, 0.1);
}

TEST(Simulate, AlternatingUsesRefreshedCritic) {
  const Trajectory t = simulate({1.0, 0.0}, {0.0, 0.1, Integrator::kEulerAlternating, 1});
  const double psi = 0.05;
  EXPECT_DOUBLE_EQ(t.points[1].psi, psi);
  EXPECT_DOUBLE_EQ(t.points[1].theta, 1.0 - 0.1 * psi * f_logistic_prime(psi * 1.0));
}

TEST(Simulate, Rk4ConservesRadiusWithoutPenalty) {
  const Trajectory t = simulate({1.0, 0.0}, {0.0, 1e-3, Integrator::kRk4Continuous, 100000});
  ASSERT_FALSE(t.diverged);
  EXPECT_NEAR(t.points.back().t, 100.0, 1e-9);
  double drift = 0.0;
  for (const auto& p : t.points) drift = std::max(drift, std::abs(p.radius - 0.5) / 0.5);
  EXPECT_LT(drift, 1e-6);
}

TEST(Simulate, UnregularizedEulerNeverShrinks) {
  const Trajectory t = simulate({1.0, 0.0}, {0.0, 0.01, Integrator::kEulerSimultaneous, 100000});
  double lowest = 1.0;
  for (const auto& p : t.points) lowest = std::min(lowest, norm(p));
  EXPECT_GE(lowest, 0.99);
  // Each Euler step of the unregularized field strictly grows the radius.
  for (std::size_t i = 1; i < t.points.size(); ++i) ASSERT_GE(t.points[i].radius, t.points[i - 1].radius);
}

TEST(Simulate, RegularizedEulerConverges) {
  const Trajectory t = simulate({1.0, 0.0}, {0.1, 0.01, Integrator::kEulerSimultaneous, 200000});
  EXPECT_LT(norm(t.points.back()), 1e-3);
}

TEST(Simulate, RegularizedEulerIsAtLeastLinear) {
  const Trajectory t = simulate({1.0, 0.0}, {1.0, 0.1, Integrator::kEulerSimultaneous, 300});
  const double a = std::log(norm(t.points[100])), b = std::log(norm(t.points[300]));
  EXPECT_LE((b - a) / 200.0, std::log(0.9962));
  // The double eigenvalue 0.95 gives a slope approaching log 0.95 from above.
  EXPECT_NEAR((b - a) / 200.0, std::log(0.95), 0.01);
}

TEST(Simulate, DivergenceIsReported) {
  // With h * gamma > 2 the explicit step overshoots the penalty term and the
  // critic oscillates with growing amplitude. (Unregularised, f' saturates and
  // the state stalls instead.)
  const Trajectory t = simulate({1.0, 0.0}, {1.0, 50.0, Integrator::kEulerSimultaneous, 100000});
  EXPECT_TRUE(t.diverged);
  EXPECT_LT(t.points.size(), 100001u);
}

TEST(Simulate, InvalidConfig) {
  EXPECT_THROW(simulate({1, 0}, {-1.0, 0.1, Integrator::kEulerSimultaneous, 10}), ContractError);
  EXPECT_THROW(simulate({1, 0}, {0.0, 0.0, Integrator::kEulerSimultaneous, 10}), ContractError);
  EXPECT_THROW(simulate({1, 0}, {0.0, 0.1, Integrator::kEulerSimultaneous, 0}), ContractError);
  EXPECT_THROW(parse_integrator("leapfrog"), ContractError);
}

TEST(ClassicField, EqualsRelativisticField) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const DiracState s{6 * rng.uniform() - 3, 6 * rng.uniform() - 3};
    const double gamma = rng.uniform();
    const Field2 a = vector_field(s, gamma), b = classic_vector_field(s, gamma);
    EXPECT_NEAR(a[0], b[0], 1e-12);
    EXPECT_NEAR(a[1], b[1], 1e-12);
  }
}

TEST(TrajectoryCsv, Header) {
  std::ostringstream out;
  write_trajectory_csv(simulate({1.0, 0.0}, {0.0, 0.1, Integrator::kEulerSimultaneous, 2}), out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,t,theta,psi,radius,vnorm");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

}  // namespace
}  // namespace gandyn
