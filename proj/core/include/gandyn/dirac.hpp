#pragma once

// The one-parameter-per-player game: generator p_theta = delta_theta, linear
// critic D(x) = psi * x, real data at 0, so L(theta, psi) = f(psi * theta).
// With an R1 weight gamma the simultaneous gradient field is
//   v = (-psi f'(psi theta), theta f'(psi theta) - gamma psi).

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gandyn/linalg.hpp"

namespace gandyn {

struct DiracState {
  double theta = 0.0;
  double psi = 0.0;
};

enum class Integrator { kEulerSimultaneous, kEulerAlternating, kRk4Continuous };

std::string_view to_string(Integrator integrator);
Integrator parse_integrator(std::string_view text);

struct DiracConfig {
  double gamma = 0.0;
  double h = 0.01;
  Integrator integrator = Integrator::kEulerSimultaneous;
  std::size_t steps = 1000;

  void validate() const;
};

using Field2 = std::array<double, 2>;

Field2 vector_field(DiracState s, double gamma);
/// Field of the classic objective f(psi theta) + f(-psi * 0); equal to the
/// paired one because the real-sample term is constant in (theta, psi).
Field2 classic_vector_field(DiracState s, double gamma);
/// Analytic Jacobian of vector_field.
Matrix jacobian(DiracState s, double gamma);

/// Eigenvalues of the Jacobian at the equilibrium (0, 0):
/// -gamma/2 +- sqrt(gamma^2/4 - f'(0)^2).
ComplexList equilibrium_eigenvalues(double gamma);

struct UpdateOperatorSpectrum {
  ComplexList eigenvalues;  // 1 + h * lambda
  std::vector<double> moduli;
  double max_modulus = 0.0;
};

UpdateOperatorSpectrum update_operator_eigs(double gamma, double h);

struct TrajectoryPoint {
  std::size_t step = 0;
  double t = 0.0;
  double theta = 0.0;
  double psi = 0.0;
  double radius = 0.0;  // (theta^2 + psi^2) / 2
  double vnorm = 0.0;   // |v| at the point
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;  // step 0 .. last completed step
  bool diverged = false;
};

inline constexpr double kDiracDivergenceBound = 1e12;

/// Integrates from s0 for cfg.steps steps. A state norm above 1e12 (or a
/// non-finite state) stops the run with `diverged` set; points so far are kept.
Trajectory simulate(DiracState s0, const DiracConfig& cfg);

/// CSV with header step,t,theta,psi,radius,vnorm.
void write_trajectory_csv(const Trajectory& trajectory, std::ostream& out);

}  // namespace gandyn
