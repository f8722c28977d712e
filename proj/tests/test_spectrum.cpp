#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>

#include "gandyn/dirac.hpp"
#include "gandyn/rng.hpp"
#include "gandyn/spectrum.hpp"

namespace gandyn {
namespace {

using cd = std::complex<double>;

void sort_eigs(ComplexList& e) {
  std::sort(e.begin(), e.end(), [](const cd& a, const cd& b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
}

TEST(AssembleField, DiracProbeReproducesClosedFormField) {
  Rng rng(1);
  for (double gamma : {0.0, 0.4}) {
    const ProbePoint pp = dirac_probe(gamma);
    const VectorField field = assemble_field(pp.probe);
    for (int i = 0; i < 10; ++i) {
      const double pt[] = {4 * rng.uniform() - 2, 4 * rng.uniform() - 2};
      const auto v = field(pt);
      const Field2 ref = vector_field({pt[0], pt[1]}, gamma);
      ASSERT_EQ(v.size(), 2u);
      EXPECT_NEAR(v[0], ref[0], 1e-10);
      EXPECT_NEAR(v[1], ref[1], 1e-10);
    }
  }
}

TEST(AssembleField, ConstantCriticPushesNothing) {
  const ProbePoint pp = affine_mlp_probe(0.0, 3);
  const VectorField field = assemble_field(pp.probe);
  Rng rng(2);
  // Move theta anywhere; the critic's output layer stays zero.
  std::vector<double> pt = pp.point;
  for (std::size_t i = 0; i < pp.probe.theta_dimension(); ++i) pt[i] += rng.uniform() - 0.5;
  const auto v = field(pt);
  for (std::size_t i = 0; i < pp.probe.theta_dimension(); ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(AssembleField, RegularizationOnlyChangesTheCriticBlock) {
  const ProbePoint plain = affine_mlp_probe(0.0, 4), reg = affine_mlp_probe(1.5, 4);
  const VectorField f0 = assemble_field(plain.probe), f1 = assemble_field(reg.probe);
  Rng rng(3);
  bool psi_differs = false;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> pt = plain.point;
    for (double& v : pt) v += 0.3 * (rng.uniform() - 0.5);
    const auto a = f0(pt), b = f1(pt);
    for (std::size_t i = 0; i < pt.size(); ++i) {
      if (i < plain.probe.theta_dimension()) {
        EXPECT_EQ(a[i], b[i]);
      } else if (std::abs(a[i] - b[i]) > 1e-9) {
        psi_differs = true;
      }
    }
  }
  EXPECT_TRUE(psi_differs);
}

TEST(AssembleField, FlattenIsABijection) {
  const ProbePoint pp = affine_mlp_probe(0.5, 5);
  EXPECT_EQ(pp.probe.dimension(), pp.point.size());
  EXPECT_EQ(pp.probe.theta_dimension(), 2u);
  const auto [g, d] = pp.probe.unflatten(pp.point);
  EXPECT_EQ(pp.probe.flatten(g, d), pp.point);
}

TEST(SpectrumReport, DiracExamples) {
  SpectrumReport r = spectrum_report(dirac_probe(1.0).probe, dirac_probe(1.0).point, 0.1);
  EXPECT_NEAR(r.max_real_part, -0.5, 1e-6);
  EXPECT_EQ(r.verdict, Verdict::kConvergent);
  EXPECT_LT(r.max_modulus, 1.0);

  r = spectrum_report(dirac_probe(0.0).probe, dirac_probe(0.0).point, 0.1);
  for (const cd& l : r.eigenvalues) EXPECT_NEAR(l.real(), 0.0, 1e-6);
  EXPECT_EQ(r.verdict, Verdict::kInconclusive);
}

TEST(SpectrumReport, DiracEmbeddingMatchesClosedForms) {
  for (double gamma : {0.0, 0.5, 1.0}) {
    const ProbePoint pp = dirac_probe(gamma);
    SpectrumReport r = spectrum_report(pp.probe, pp.point, 0.01);
    ComplexList want = equilibrium_eigenvalues(gamma);
    sort_eigs(r.eigenvalues);
    sort_eigs(want);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(std::abs(r.eigenvalues[i] - want[i]), 1e-6) << gamma;
  }
}

TEST(SpectrumReport, MeanSlopeProbeMatchesItsClosedFormJacobian) {
  for (double gamma : {0.0, 1.0}) {
    const ProbePoint pp = mean_slope_probe(gamma, 64, 7);
    // J = [[0, -f'(0)], [f'(0), f''(0) m2 - gamma]] with m2 the mean squared
    // paired gap at theta*.
    double m2 = 0.0;
    for (std::size_t i = 0; i < 64; ++i) {
      const double gap = pp.probe.latents[i] + pp.point[0] - pp.probe.reals[i];
      m2 += gap * gap / 64.0;
    }
    const SpectrumReport r = spectrum_report(pp.probe, pp.point, 0.01);
    EXPECT_NEAR(r.jacobian(0, 0), 0.0, 1e-6);
    EXPECT_NEAR(r.jacobian(0, 1), -0.5, 1e-6);
    EXPECT_NEAR(r.jacobian(1, 0), 0.5, 1e-6);
    EXPECT_NEAR(r.jacobian(1, 1), -0.25 * m2 - gamma, 1e-6);
    if (gamma == 1.0) {
      EXPECT_LT(r.max_real_part, 0.0);
      EXPECT_EQ(r.verdict, Verdict::kConvergent);
    }
    // The field vanishes at the constructed equilibrium.
    for (double v : assemble_field(pp.probe)(pp.point)) EXPECT_NEAR(v, 0.0, 1e-14);
  }
}

TEST(SpectrumReport, ThetaThetaBlockVanishesWithConstantCritic) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const ProbePoint pp = affine_mlp_probe(0.0, seed);
    const SpectrumReport r = spectrum_report(pp.probe, pp.point, 0.01);
    const std::size_t k = pp.probe.theta_dimension();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) EXPECT_LT(std::abs(r.jacobian(i, j)), 1e-6);
  }
}

TEST(SpectrumReport, VerdictsAgreeForSmallSteps) {
  std::vector<ProbePoint> probes = {dirac_probe(0.0), dirac_probe(0.5), dirac_probe(1.0),
                                    mean_slope_probe(0.0, 32, 1), mean_slope_probe(1.0, 32, 2),
                                    affine_mlp_probe(0.0, 1), affine_mlp_probe(1.0, 1)};
  for (const auto& pp : probes) {
    for (double h : {0.01, 0.001}) {
      const SpectrumReport r = spectrum_report(pp.probe, pp.point, h);
      EXPECT_EQ(classify_spectrum(r.eigenvalues), classify_update(r.eigenvalues, h));
      EXPECT_EQ(r.verdict, classify_spectrum(r.eigenvalues));
    }
  }
}

TEST(Verdict, Trichotomy) {
  EXPECT_EQ(classify_spectrum({cd(-0.1, 1), cd(-0.1, -1)}), Verdict::kConvergent);
  EXPECT_EQ(classify_spectrum({cd(-0.1, 0), cd(0.2, 0)}), Verdict::kNonConvergent);
  EXPECT_EQ(classify_spectrum({cd(0, 0.5), cd(0, -0.5)}), Verdict::kInconclusive);
  EXPECT_EQ(classify_spectrum({cd(-1, 0), cd(1e-9, 0)}), Verdict::kInconclusive);
  EXPECT_EQ(to_string(Verdict::kNonConvergent), "non-convergent");
}

TEST(SpectrumReport, UpdateEigenvaluesAreOnePlusHLambda) {
  const ComplexList eigs = {cd(-0.5, 0.5), cd(-0.5, -0.5), cd(0.1, 0)};
  const SpectrumReport r = spectrum_report(eigs, 0.2);
  ASSERT_EQ(r.update_eigenvalues.size(), 3u);
  double mx = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.update_eigenvalues[i], 1.0 + 0.2 * eigs[i]);
    mx = std::max(mx, std::abs(r.update_eigenvalues[i]));
  }
  EXPECT_DOUBLE_EQ(r.max_modulus, mx);
  EXPECT_DOUBLE_EQ(r.max_real_part, 0.1);
  EXPECT_EQ(r.verdict, Verdict::kNonConvergent);
}

TEST(SpectrumReport, JsonExport) {
  const ProbePoint pp = dirac_probe(1.0);
  const nlohmann::json j = to_json(spectrum_report(pp.probe, pp.point, 0.1));
  for (const char* key : {"eigenvalues", "max_real_part", "h", "max_modulus", "verdict"}) EXPECT_TRUE(j.contains(key));
  EXPECT_EQ(j["verdict"], "convergent");
  EXPECT_EQ(j["eigenvalues"].size(), 2u);
  EXPECT_EQ(j["eigenvalues"][0].size(), 2u);
  EXPECT_NEAR(j["max_real_part"].get<double>(), -0.5, 1e-6);
}

}  // namespace
}  // namespace gandyn
