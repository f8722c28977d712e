#pragma once

// Local convergence analysis of the two-player field
//   v(theta, psi) = (-grad_theta L, grad_psi L - grad_psi R)
// for small differentiable players on a fixed batch: Jacobian spectra at
// constructed equilibria and the eigenvalues 1 + h*lambda of one Euler step.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gandyn/linalg.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/models.hpp"

namespace gandyn {

/// Players, objective and a fixed full batch. Parameters flatten as all of G's
/// tensors (in Network::parameters() order, row-major) followed by all of D's.
struct FieldProbe {
  std::shared_ptr<const Network> generator;
  std::shared_ptr<const Network> discriminator;
  ObjectiveSpec objective;
  Tensor latents;  // [n, k]
  Tensor reals;    // [n, d]

  std::size_t theta_dimension() const;
  std::size_t dimension() const;
  std::vector<double> flatten(const ParamSet& g, const ParamSet& d) const;
  std::pair<ParamSet, ParamSet> unflatten(std::span<const double> point) const;
};

/// Deterministic field over the flattened parameters. Lazy regularisation is
/// ignored: the configured gammas apply at every evaluation.
VectorField assemble_field(const FieldProbe& probe);

enum class Verdict { kConvergent, kNonConvergent, kInconclusive };
std::string_view to_string(Verdict verdict);

/// Sign of the largest real part, with |re| <= tol counted as zero.
Verdict classify_spectrum(const ComplexList& eigs, double tol = 1e-6);

/// Same trichotomy read off the moduli of 1 + h*lambda. Moduli within
/// h*tol + h^2*max|lambda|^2 of 1 are counted as on the unit circle, so for
/// small h it agrees with classify_spectrum.
Verdict classify_update(const ComplexList& eigs, double h, double tol = 1e-6);

struct SpectrumReport {
  Matrix jacobian;
  ComplexList eigenvalues;
  double max_real_part = 0.0;
  double h = 0.0;
  ComplexList update_eigenvalues;
  double max_modulus = 0.0;
  Verdict verdict = Verdict::kInconclusive;
};

SpectrumReport spectrum_report(const ComplexList& eigs, double h, double tol = 1e-6);
SpectrumReport spectrum_report(const FieldProbe& probe, std::span<const double> point, double h,
                               double eps = 1e-5, double tol = 1e-6);

nlohmann::json to_json(const SpectrumReport& report);

struct ProbePoint {
  FieldProbe probe;
  std::vector<double> point;  // the constructed equilibrium
};

/// theta-emitting generator, linear critic, one real sample at 0; R1 weight gamma.
/// Its field is the closed-form Dirac field at (theta, psi).
ProbePoint dirac_probe(double gamma);

/// G(z) = z + theta against a standard normal, linear critic, R1 weight gamma,
/// n samples. theta* = -mean(z - x) makes the paired field vanish at psi = 0.
ProbePoint mean_slope_probe(double gamma, std::size_t n, std::uint64_t seed);

/// G(z) = z + theta in 2-D with fakes paired onto identical reals, and a small
/// leaky-ReLU MLP critic whose output layer is zero (a constant critic).
/// gamma weights both R1 and R2.
ProbePoint affine_mlp_probe(double gamma, std::uint64_t seed);

}  // namespace gandyn
