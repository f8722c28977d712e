#include "gandyn/losses.hpp"

#include <cmath>

#include "gandyn/kernels.hpp"

namespace gandyn {

std::string_view to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::kClassicGan ? "classic_gan" : "rpgan";
}

ObjectiveKind parse_objective_kind(std::string_view text) {
  if (text == "classic_gan" || text == "gan") return ObjectiveKind::kClassicGan;
  if (text == "rpgan") return ObjectiveKind::kRpGan;
  throw ContractError("unknown objective kind '" + std::string(text) + "' (expected classic_gan or rpgan)");
}

std::string_view to_string(Pairing pairing) { return pairing == Pairing::kIndex ? "index" : "permuted"; }

Pairing parse_pairing(std::string_view text) {
  if (text == "index") return Pairing::kIndex;
  if (text == "permuted") return Pairing::kPermuted;
  throw ContractError("unknown pairing '" + std::string(text) + "' (expected index or permuted)");
}

void ObjectiveSpec::validate() const {
  if (!std::isfinite(gamma_r1) || gamma_r1 < 0.0) throw ContractError("gamma_r1 must be finite and >= 0");
  if (!std::isfinite(gamma_r2) || gamma_r2 < 0.0) throw ContractError("gamma_r2 must be finite and >= 0");
  if (lazy_interval < 1) throw ContractError("lazy_interval must be >= 1");
}

double effective_gamma(double gamma, std::size_t lazy_interval, std::size_t step) {
  if (lazy_interval <= 1) return gamma;
  return step % lazy_interval == 0 ? gamma * static_cast<double>(lazy_interval) : 0.0;
}

double f_logistic(double t) { return -kernels::softplus(-t); }
double f_logistic_prime(double t) { return kernels::sigmoid(-t); }
double f_logistic_second(double t) { return -kernels::sigmoid(t) * kernels::sigmoid(-t); }

namespace {

void check_pair(std::size_t a, std::size_t b) {
  if (a != b) throw ContractError("critic outputs differ in length: " + std::to_string(a) + " vs " + std::to_string(b));
  if (a == 0) throw ContractError("critic outputs are empty");
}

void check_pair(Var a, Var b) {
  if (a.shape().size() != 1 || a.shape() != b.shape()) {
    throw ContractError("critic outputs must be equal-length vectors, got " + to_string(a.shape()) + " and " +
                        to_string(b.shape()));
  }
}

}  // namespace

double gan_value(std::span<const double> d_real, std::span<const double> d_fake) {
  check_pair(d_real.size(), d_fake.size());
  double fake = 0.0, real = 0.0;
  for (double v : d_fake) fake += f_logistic(v);
  for (double v : d_real) real += f_logistic(-v);
  const auto n = static_cast<double>(d_fake.size());
  return fake / n + real / n;
}

double rpgan_value(std::span<const double> d_fake, std::span<const double> d_real) {
  check_pair(d_fake.size(), d_real.size());
  double total = 0.0;
  for (std::size_t i = 0; i < d_fake.size(); ++i) total += f_logistic(d_fake[i] - d_real[i]);
  return total / static_cast<double>(d_fake.size());
}

Var f_logistic(Var t) { return -softplus(-t); }

Var gan_value(Var d_real, Var d_fake) {
  check_pair(d_real, d_fake);
  return mean(f_logistic(d_fake)) + mean(f_logistic(-d_real));
}

Var rpgan_value(Var d_fake, Var d_real) {
  check_pair(d_fake, d_real);
  return mean(f_logistic(d_fake - d_real));
}

Var objective_value(ObjectiveKind kind, Var d_fake, Var d_real) {
  return kind == ObjectiveKind::kRpGan ? rpgan_value(d_fake, d_real) : gan_value(d_real, d_fake);
}

Var input_gradient_norm2(Var d_out, Var x) {
  // Samples do not interact inside D, so the gradient of the summed output
  // holds every per-sample input gradient.
  Var gx = grad(sum(d_out), x);
  return (1.0 / static_cast<double>(x.shape()[0])) * sum(square(gx));
}

Var r1_penalty(const Network& d, std::string_view d_prefix, Var reals, Var gamma) {
  Var d_out = d.forward(*reals.graph, reals, d_prefix);
  return 0.5 * (gamma * input_gradient_norm2(d_out, reals));
}

Var r1_penalty(const Network& d, std::string_view d_prefix, Var reals, double gamma) {
  return r1_penalty(d, d_prefix, reals, constant(*reals.graph, Tensor::scalar(gamma)));
}

Var r2_penalty(const Network& d, std::string_view d_prefix, Var fakes, Var gamma) {
  return r1_penalty(d, d_prefix, stop_gradient(fakes), gamma);
}

Var r2_penalty(const Network& d, std::string_view d_prefix, Var fakes, double gamma) {
  return r2_penalty(d, d_prefix, fakes, constant(*fakes.graph, Tensor::scalar(gamma)));
}

LossNodes build_losses(ObjectiveKind kind, const Network& d, std::string_view d_prefix, Var fakes, Var reals,
                       Var gamma_r1, Var gamma_r2) {
  Graph& g = *fakes.graph;
  LossNodes out;
  Var d_fake = d.forward(g, fakes, d_prefix);
  Var d_real = d.forward(g, reals, d_prefix);
  out.value = objective_value(kind, d_fake, d_real);
  out.loss_g = out.value;

  out.gradnorm2_real = input_gradient_norm2(d_real, reals);
  if (g.node(fakes.id).op == Op::kVariable) {
    // Leaf fakes carry no generator dependence; reuse the critic pass.
    out.gradnorm2_fake = input_gradient_norm2(d_fake, fakes);
  } else {
    Var detached = stop_gradient(fakes);
    out.gradnorm2_fake = input_gradient_norm2(d.forward(g, detached, d_prefix), detached);
  }
  out.r1 = 0.5 * (gamma_r1 * out.gradnorm2_real);
  out.r2 = 0.5 * (gamma_r2 * out.gradnorm2_fake);
  out.loss_d = (-out.value + out.r1) + out.r2;
  return out;
}

void Batch::validate() const {
  if (reals.rank() != 2 || latents.rank() != 2) throw ContractError("batch tensors must be [n, d] and [n, k]");
  if (reals.dim(0) != latents.dim(0)) {
    throw ContractError("batch pairing needs equal sizes, got " + std::to_string(reals.dim(0)) + " reals and " +
                        std::to_string(latents.dim(0)) + " latents");
  }
  if (reals.dim(0) == 0) throw ContractError("batch is empty");
}

PlayerLosses player_losses(const ObjectiveSpec& spec, const Network& g, const Network& d, const Batch& batch,
                           std::size_t step) {
  spec.validate();
  batch.validate();
  PlayerLosses out;
  Graph& gr = out.graph;
  Var z = variable(gr, "z", batch.latents.shape());
  Var reals = variable(gr, "x_real", batch.reals.shape());
  Var fakes = g.forward(gr, z, "G.");
  if (fakes.shape() != reals.shape()) {
    throw ShapeError(fakes.id, "generator output " + to_string(fakes.shape()) + " does not match reals " +
                                   to_string(reals.shape()));
  }
  Var g1 = constant(gr, Tensor::scalar(effective_gamma(spec.gamma_r1, spec.lazy_interval, step)));
  Var g2 = constant(gr, Tensor::scalar(effective_gamma(spec.gamma_r2, spec.lazy_interval, step)));
  const LossNodes nodes = build_losses(spec.kind, d, "D.", fakes, reals, g1, g2);
  out.value = nodes.value.id;
  out.loss_g = nodes.loss_g.id;
  out.loss_d = nodes.loss_d.id;
  out.r1 = nodes.r1.id;
  out.r2 = nodes.r2.id;
  return out;
}

TensorMap loss_bindings(const Batch& batch, const ParamSet& g_params, const ParamSet& d_params) {
  TensorMap out = prefixed(g_params, "G.");
  for (auto& [name, value] : prefixed(d_params, "D.")) out.emplace(name, std::move(value));
  out.emplace("z", batch.latents);
  out.emplace("x_real", batch.reals);
  return out;
}

}  // namespace gandyn
