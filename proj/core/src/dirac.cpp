#include "gandyn/dirac.hpp"

#include <cmath>
#include <ostream>

#include "gandyn/errors.hpp"
#include "gandyn/format.hpp"
#include "gandyn/losses.hpp"

namespace gandyn {

std::string_view to_string(Integrator integrator) {
  switch (integrator) {
    case Integrator::kEulerSimultaneous: return "euler_simultaneous";
    case Integrator::kEulerAlternating: return "euler_alternating";
    case Integrator::kRk4Continuous: return "rk4_continuous";
  }
  return "unknown";
}

Integrator parse_integrator(std::string_view text) {
  if (text == "euler_simultaneous") return Integrator::kEulerSimultaneous;
  if (text == "euler_alternating") return Integrator::kEulerAlternating;
  if (text == "rk4_continuous") return Integrator::kRk4Continuous;
  throw ContractError("unknown integrator '" + std::string(text) +
                      "' (expected euler_simultaneous, euler_alternating or rk4_continuous)");
}

void DiracConfig::validate() const {
  if (!std::isfinite(gamma) || gamma < 0.0) throw ContractError("gamma must be finite and >= 0");
  if (!std::isfinite(h) || h <= 0.0) throw ContractError("step size h must be finite and > 0");
  if (steps == 0) throw ContractError("steps must be positive");
}

Field2 vector_field(DiracState s, double gamma) {
  const double fp = f_logistic_prime(s.psi * s.theta);
  return {-s.psi * fp, s.theta * fp - gamma * s.psi};
}

Field2 classic_vector_field(DiracState s, double gamma) {
  // L = f(psi theta) + f(-psi x_real) with x_real = 0.
  constexpr double x_real = 0.0;
  const double fp_fake = f_logistic_prime(s.psi * s.theta);
  const double fp_real = f_logistic_prime(-s.psi * x_real);
  const double dl_dtheta = s.psi * fp_fake;
  const double dl_dpsi = s.theta * fp_fake - x_real * fp_real;
  return {-dl_dtheta, dl_dpsi - gamma * s.psi};
}

Matrix jacobian(DiracState s, double gamma) {
  const double t = s.psi * s.theta;
  const double fp = f_logistic_prime(t);
  const double fpp = f_logistic_second(t);
  Matrix j(2, 2);
  j(0, 0) = -s.psi * s.psi * fpp;
  j(0, 1) = -fp - t * fpp;
  j(1, 0) = fp + t * fpp;
  j(1, 1) = s.theta * s.theta * fpp - gamma;
  return j;
}

ComplexList equilibrium_eigenvalues(double gamma) {
  if (!(gamma >= 0.0)) throw ContractError("gamma must be >= 0");
  const double fp0 = f_logistic_prime(0.0);
  const double disc = gamma * gamma / 4.0 - fp0 * fp0;
  const double centre = -gamma / 2.0;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return {{centre + r, 0.0}, {centre - r, 0.0}};
  }
  const double w = std::sqrt(-disc);
  return {{centre, w}, {centre, -w}};
}

UpdateOperatorSpectrum update_operator_eigs(double gamma, double h) {
  if (!(h > 0.0)) throw ContractError("step size h must be > 0");
  UpdateOperatorSpectrum out;
  for (const auto& lambda : equilibrium_eigenvalues(gamma)) {
    const std::complex<double> mu = 1.0 + h * lambda;
    out.eigenvalues.push_back(mu);
    out.moduli.push_back(std::abs(mu));
    out.max_modulus = std::max(out.max_modulus, std::abs(mu));
  }
  return out;
}

namespace {

TrajectoryPoint record(std::size_t step, double t, DiracState s, double gamma) {
  const Field2 v = vector_field(s, gamma);
  return {step, t, s.theta, s.psi, 0.5 * (s.theta * s.theta + s.psi * s.psi), std::hypot(v[0], v[1])};
}

DiracState advance(DiracState s, const DiracConfig& cfg) {
  const double h = cfg.h;
  switch (cfg.integrator) {
    case Integrator::kEulerSimultaneous: {
      const Field2 v = vector_field(s, cfg.gamma);
      return {s.theta + h * v[0], s.psi + h * v[1]};
    }
    case Integrator::kEulerAlternating: {
      // Critic first, then the generator sees the refreshed critic.
      const double psi = s.psi + h * vector_field(s, cfg.gamma)[1];
      const double theta = s.theta + h * vector_field({s.theta, psi}, cfg.gamma)[0];
      return {theta, psi};
    }
    case Integrator::kRk4Continuous: {
      auto at = [&](DiracState p, const Field2& k, double c) {
        return DiracState{p.theta + c * k[0], p.psi + c * k[1]};
      };
      const Field2 k1 = vector_field(s, cfg.gamma);
      const Field2 k2 = vector_field(at(s, k1, h / 2), cfg.gamma);
      const Field2 k3 = vector_field(at(s, k2, h / 2), cfg.gamma);
      const Field2 k4 = vector_field(at(s, k3, h), cfg.gamma);
      return {s.theta + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
              s.psi + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
    }
  }
  return s;
}

}  // namespace

Trajectory simulate(DiracState s0, const DiracConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(s0.theta) || !std::isfinite(s0.psi)) throw ContractError("initial state must be finite");
  Trajectory traj;
  traj.points.reserve(cfg.steps + 1);
  traj.points.push_back(record(0, 0.0, s0, cfg.gamma));
  DiracState s = s0;
  for (std::size_t k = 1; k <= cfg.steps; ++k) {
    s = advance(s, cfg);
    const double norm = std::hypot(s.theta, s.psi);
    if (!std::isfinite(norm) || norm > kDiracDivergenceBound) {
      traj.diverged = true;
      break;
    }
    traj.points.push_back(record(k, static_cast<double>(k) * cfg.h, s, cfg.gamma));
  }
  return traj;
}

void write_trajectory_csv(const Trajectory& trajectory, std::ostream& out) {
  out << "step,t,theta,psi,radius,vnorm\n";
  for (const auto& p : trajectory.points) {
    out << p.step << ',' << format_double(p.t) << ',' << format_double(p.theta) << ',' << format_double(p.psi) << ','
        << format_double(p.radius) << ',' << format_double(p.vnorm) << '\n';
  }
}

}  // namespace gandyn
