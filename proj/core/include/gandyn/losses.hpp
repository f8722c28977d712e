#pragma once

// Adversarial objectives with the logistic f(t) = -log(1 + e^-t):
//   classic  L = E f(D(G(z))) + E f(-D(x))
//   paired   L = E f(D(G(z)) - D(x))
// G descends L; D descends -L + R1 + R2, where R1/R2 are zero-centred
// input-gradient penalties on real/fake batches.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "gandyn/autodiff.hpp"
#include "gandyn/models.hpp"

namespace gandyn {

enum class ObjectiveKind { kClassicGan, kRpGan };

/// How fakes and reals are matched in the paired objective: element i with
/// element i, or reals shuffled by an independent permutation first.
enum class Pairing { kIndex, kPermuted };

std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view text);
std::string_view to_string(Pairing pairing);
Pairing parse_pairing(std::string_view text);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kRpGan;
  double gamma_r1 = 0.0;
  double gamma_r2 = 0.0;
  std::size_t lazy_interval = 1;
  Pairing pairing = Pairing::kIndex;

  void validate() const;
};

/// Penalty weight applied at `step` under lazy regularisation: gamma * N on
/// every N-th step, 0 otherwise.
double effective_gamma(double gamma, std::size_t lazy_interval, std::size_t step);

// Scalar forms.
double f_logistic(double t);
double f_logistic_prime(double t);   // sigmoid(-t)
double f_logistic_second(double t);  // -sigmoid(t) sigmoid(-t)

double gan_value(std::span<const double> d_real, std::span<const double> d_fake);
double rpgan_value(std::span<const double> d_fake, std::span<const double> d_real);

// Graph forms. Critic outputs are [n].
Var f_logistic(Var t);
Var gan_value(Var d_real, Var d_fake);
Var rpgan_value(Var d_fake, Var d_real);
Var objective_value(ObjectiveKind kind, Var d_fake, Var d_real);

/// Mean over the batch of ||grad_x D(x)||^2, where `d_out` = D(x) is [n].
/// Differentiable with respect to everything `d_out` depends on.
Var input_gradient_norm2(Var d_out, Var x);

/// (gamma / 2) * mean ||grad_x D(x)||^2 with D instantiated on `reals`.
Var r1_penalty(const Network& d, std::string_view d_prefix, Var reals, Var gamma);
Var r1_penalty(const Network& d, std::string_view d_prefix, Var reals, double gamma);
/// As r1_penalty on `fakes`; the fakes are detached so no gradient reaches G.
Var r2_penalty(const Network& d, std::string_view d_prefix, Var fakes, Var gamma);
Var r2_penalty(const Network& d, std::string_view d_prefix, Var fakes, double gamma);

/// Per-player losses on an existing graph.
struct LossNodes {
  Var value;  // L
  Var loss_g;
  Var loss_d;
  Var r1;
  Var r2;
  Var gradnorm2_real;
  Var gradnorm2_fake;
};

/// Builds L on D(fakes) and D(reals), and the penalties on separate critic
/// instances (R2 on detached fakes). `gamma_r1` / `gamma_r2` are scalar nodes
/// so one graph can serve every step of a lazily regularised schedule.
LossNodes build_losses(ObjectiveKind kind, const Network& d, std::string_view d_prefix, Var fakes, Var reals,
                       Var gamma_r1, Var gamma_r2);

struct Batch {
  Tensor reals;    // [n, d]
  Tensor latents;  // [n, k]

  void validate() const;
  std::size_t size() const { return reals.dim(0); }
};

/// Self-contained loss graph for one step: variables "z", "x_real", "G.*" and
/// "D.*"; penalty weights are baked in from `step` and the lazy interval.
struct PlayerLosses {
  Graph graph;
  NodeId value = 0;
  NodeId loss_g = 0;
  NodeId loss_d = 0;
  NodeId r1 = 0;
  NodeId r2 = 0;
};

PlayerLosses player_losses(const ObjectiveSpec& spec, const Network& g, const Network& d, const Batch& batch,
                           std::size_t step);

/// Bindings for a PlayerLosses graph.
TensorMap loss_bindings(const Batch& batch, const ParamSet& g_params, const ParamSet& d_params);

}  // namespace gandyn
