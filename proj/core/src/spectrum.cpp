#include "gandyn/spectrum.hpp"

#include <algorithm>
#include <cmath>

namespace gandyn {

namespace {

std::size_t count(const Network& net) { return parameter_count(net); }

void append(std::vector<double>& out, const Network& net, const ParamSet& params) {
  for (const auto& spec : net.parameters()) {
    const Tensor& t = params.at(spec.name);
    if (t.shape() != spec.shape) throw ShapeError(0, "parameter '" + spec.name + "' has shape " + to_string(t.shape()));
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
}

ParamSet take(const Network& net, std::span<const double> flat, std::size_t& offset) {
  ParamSet out;
  for (const auto& spec : net.parameters()) {
    Tensor t(spec.shape);
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data().begin());
    offset += t.size();
    out.emplace(spec.name, std::move(t));
  }
  return out;
}

}  // namespace

std::size_t FieldProbe::theta_dimension() const { return count(*generator); }
std::size_t FieldProbe::dimension() const { return count(*generator) + count(*discriminator); }

std::vector<double> FieldProbe::flatten(const ParamSet& g, const ParamSet& d) const {
  std::vector<double> out;
  out.reserve(dimension());
  append(out, *generator, g);
  append(out, *discriminator, d);
  return out;
}

std::pair<ParamSet, ParamSet> FieldProbe::unflatten(std::span<const double> point) const {
  if (point.size() != dimension()) {
    throw ContractError("probe point has " + std::to_string(point.size()) + " entries, expected " +
                        std::to_string(dimension()));
  }
  std::size_t offset = 0;
  ParamSet g = take(*generator, point, offset);
  ParamSet d = take(*discriminator, point, offset);
  return {std::move(g), std::move(d)};
}

namespace {

struct FieldState {
  FieldProbe probe;
  std::vector<std::string> names;  // flattened order, prefixed
  std::vector<NodeId> grads;       // d loss_g / d theta, then d loss_d / d psi
  std::unique_ptr<Evaluator> eval;
};

std::shared_ptr<FieldState> build_field(const FieldProbe& probe) {
  probe.objective.validate();
  Batch{probe.reals, probe.latents}.validate();
  auto state = std::make_shared<FieldState>();
  state->probe = probe;

  Graph g;
  Var z = variable(g, "z", probe.latents.shape());
  Var x = variable(g, "x_real", probe.reals.shape());
  Var fakes = probe.generator->forward(g, z, "G.");
  Var c1 = constant(g, Tensor::scalar(probe.objective.gamma_r1));
  Var c2 = constant(g, Tensor::scalar(probe.objective.gamma_r2));
  const LossNodes loss = build_losses(probe.objective.kind, *probe.discriminator, "D.", fakes, x, c1, c2);

  auto ids_for = [&](const Network& net, const std::string& prefix) {
    std::vector<NodeId> ids;
    for (const auto& spec : net.parameters()) {
      state->names.push_back(prefix + spec.name);
      ids.push_back(g.variable(prefix + spec.name, spec.shape));
    }
    return ids;
  };
  const auto theta_ids = ids_for(*probe.generator, "G.");
  const auto psi_ids = ids_for(*probe.discriminator, "D.");
  state->grads = g.gradients(loss.loss_g.id, theta_ids);
  const auto psi_grads = g.gradients(loss.loss_d.id, psi_ids);
  state->grads.insert(state->grads.end(), psi_grads.begin(), psi_grads.end());

  state->eval = std::make_unique<Evaluator>(std::move(g), state->grads);
  state->eval->bind("z", probe.latents);
  state->eval->bind("x_real", probe.reals);
  return state;
}

}  // namespace

VectorField assemble_field(const FieldProbe& probe) {
  auto state = build_field(probe);
  return [state](std::span<const double> point) {
    const auto [g, d] = state->probe.unflatten(point);
    for (const auto& [name, value] : g) state->eval->bind("G." + name, value);
    for (const auto& [name, value] : d) state->eval->bind("D." + name, value);
    state->eval->run();
    // Both players descend their losses: v = -(grad loss_g, grad loss_d).
    std::vector<double> v;
    v.reserve(point.size());
    for (NodeId id : state->grads) {
      for (double x : state->eval->value(id).data()) v.push_back(-x);
    }
    return v;
  };
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kConvergent: return "convergent";
    case Verdict::kNonConvergent: return "non-convergent";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "unknown";
}

namespace {

double max_real(const ComplexList& eigs) {
  double m = -INFINITY;
  for (const auto& e : eigs) m = std::max(m, e.real());
  return m;
}

}  // namespace

Verdict classify_spectrum(const ComplexList& eigs, double tol) {
  if (eigs.empty()) throw ContractError("empty spectrum");
  const double m = max_real(eigs);
  if (m > tol) return Verdict::kNonConvergent;
  if (m < -tol) return Verdict::kConvergent;
  return Verdict::kInconclusive;
}

Verdict classify_update(const ComplexList& eigs, double h, double tol) {
  if (eigs.empty()) throw ContractError("empty spectrum");
  double max_mod = 0.0, max_abs = 0.0;
  for (const auto& e : eigs) {
    max_mod = std::max(max_mod, std::abs(1.0 + h * e));
    max_abs = std::max(max_abs, std::abs(e));
  }
  const double band = h * tol + h * h * max_abs * max_abs;
  if (max_mod > 1.0 + band) return Verdict::kNonConvergent;
  if (max_mod < 1.0 - band) return Verdict::kConvergent;
  return Verdict::kInconclusive;
}

SpectrumReport spectrum_report(const ComplexList& eigs, double h, double tol) {
  if (!(h > 0.0)) throw ContractError("step size h must be > 0");
  SpectrumReport r;
  r.eigenvalues = eigs;
  r.max_real_part = max_real(eigs);
  r.h = h;
  for (const auto& e : eigs) {
    const std::complex<double> mu = 1.0 + h * e;
    r.update_eigenvalues.push_back(mu);
    r.max_modulus = std::max(r.max_modulus, std::abs(mu));
  }
  r.verdict = classify_spectrum(eigs, tol);
  return r;
}

SpectrumReport spectrum_report(const FieldProbe& probe, std::span<const double> point, double h, double eps,
                               double tol) {
  for (double x : point) {
    if (!std::isfinite(x)) throw ContractError("probe point must be finite");
  }
  const Matrix j = numerical_jacobian(assemble_field(probe), point, eps);
  SpectrumReport r = spectrum_report(eigenvalues(j), h, tol);
  r.jacobian = j;
  return r;
}

nlohmann::json to_json(const SpectrumReport& report) {
  auto pairs = [](const ComplexList& list) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : list) out.push_back({e.real(), e.imag()});
    return out;
  };
  return {
      {"eigenvalues", pairs(report.eigenvalues)},
      {"max_real_part", report.max_real_part},
      {"h", report.h},
      {"update_eigenvalues", pairs(report.update_eigenvalues)},
      {"max_modulus", report.max_modulus},
      {"verdict", to_string(report.verdict)},
  };
}

ProbePoint dirac_probe(double gamma) {
  ProbePoint out;
  out.probe.generator = std::make_shared<const DiracGenerator>(1, 1);
  out.probe.discriminator = std::make_shared<const LinearCritic>(1);
  out.probe.objective.kind = ObjectiveKind::kRpGan;
  out.probe.objective.gamma_r1 = gamma;
  out.probe.latents = Tensor({1, 1}, 0.0);
  out.probe.reals = Tensor({1, 1}, 0.0);
  out.point = {0.0, 0.0};
  return out;
}

ProbePoint mean_slope_probe(double gamma, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ContractError("mean-slope probe needs n >= 1");
  ProbePoint out;
  out.probe.generator = std::make_shared<const ShiftGenerator>(1);
  out.probe.discriminator = std::make_shared<const LinearCritic>(1);
  out.probe.objective.kind = ObjectiveKind::kRpGan;
  out.probe.objective.gamma_r1 = gamma;
  Rng root(seed);
  Rng zr = root.split("latents");
  Rng xr = root.split("reals");
  out.probe.latents = Tensor({n, 1});
  out.probe.reals = Tensor({n, 1});
  double gap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.probe.latents[i] = normal(zr);
    out.probe.reals[i] = normal(xr);
    gap += out.probe.latents[i] - out.probe.reals[i];
  }
  out.point = {-gap / static_cast<double>(n), 0.0};
  return out;
}

ProbePoint affine_mlp_probe(double gamma, std::uint64_t seed) {
  constexpr std::size_t kDim = 2, kBatch = 8;
  ProbePoint out;
  auto gen = std::make_shared<const ShiftGenerator>(kDim);
  MlpSpec spec;
  spec.input_dim = kDim;
  spec.hidden = {4};
  spec.output_dim = 1;
  spec.scalar_output = true;
  auto critic = std::make_shared<const Mlp>(spec);
  out.probe.generator = gen;
  out.probe.discriminator = critic;
  out.probe.objective.kind = ObjectiveKind::kRpGan;
  out.probe.objective.gamma_r1 = gamma;
  out.probe.objective.gamma_r2 = gamma;

  // Dyadic values keep z + theta* == x exact in floating point.
  Rng root(seed);
  Rng xr = root.split("reals");
  const std::vector<double> theta_star{0.25, -0.5};
  out.probe.reals = Tensor({kBatch, kDim});
  out.probe.latents = Tensor({kBatch, kDim});
  for (std::size_t i = 0; i < kBatch * kDim; ++i) {
    out.probe.reals[i] = std::round(8.0 * normal(xr)) / 8.0;
    out.probe.latents[i] = out.probe.reals[i] - theta_star[i % kDim];
  }

  Rng dr = root.split("critic");
  ParamSet d = critic->initialize(dr);
  d["l1.w"] = Tensor({4, 1}, 0.0);
  d["l1.b"] = Tensor({1}, 0.3);
  ParamSet g{{"theta", Tensor({kDim}, theta_star)}};
  out.point = out.probe.flatten(g, d);
  return out;
}

}  // namespace gandyn
