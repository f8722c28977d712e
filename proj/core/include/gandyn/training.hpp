#pragma once

// Two-player trainer: Adam without momentum, cosine burn-in of learning rate,
// penalty weight, Adam beta2 and EMA half-life, a generator EMA, divergence
// detection, and a metrics table written as CSV.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gandyn/data.hpp"
#include "gandyn/losses.hpp"
#include "gandyn/models.hpp"

namespace gandyn {

/// Malformed or inconsistent experiment configuration; `what()` names the key.
class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

struct ScheduleSpec {
  double start = 0.0;
  double target = 0.0;
  std::size_t burnin = 0;

  void validate(std::string_view name) const;
};

/// target + (start - target) * (1 + cos(pi t / T)) / 2 for t < T, else target.
double cosine_burnin(const ScheduleSpec& s, std::size_t t);

struct OptState {
  TensorMap second_moment;
  std::size_t step = 0;
  /// Product of every beta2 used so far; bias correction divides by 1 - product.
  double beta2_product = 1.0;
  double epsilon = 1e-8;
};

/// One Adam step with beta1 = 0: params -= lr * g / (sqrt(v_hat) + eps).
void adam_step(OptState& state, ParamSet& params, const ParamSet& grads, double lr, double beta2);

struct EmaState {
  ParamSet shadow;
};

/// 0.5 ^ (minibatch / half_life).
double ema_decay(double minibatch, double half_life);
void ema_update(EmaState& state, const ParamSet& current, double beta);

struct DatasetConfig {
  std::string kind = "grid";  // grid | ring | line | circle
  GridSpec grid;
  ShapeSpec shape;

  Dataset build() const;
};

struct ModelConfig {
  std::size_t z_dim = 8;
  std::vector<std::size_t> g_hidden{64, 64};
  std::vector<std::size_t> d_hidden{64, 64};
  double slope = kDefaultLeakySlope;
  bool residual = false;
};

enum class UpdateOrder { kAlternating, kSimultaneous };

/// gamma_r1 / gamma_r2 of the objective multiply the scheduled gamma, so
/// {1, 1} is R1 + R2, {1, 0} is R1 only and {0, 0} disables both.
struct ExperimentConfig {
  ObjectiveSpec objective{ObjectiveKind::kRpGan, 1.0, 1.0, 1, Pairing::kIndex};
  DatasetConfig dataset;
  ModelConfig model;
  ScheduleSpec lr{2e-4, 5e-5, 10000};
  ScheduleSpec gamma{1.0, 0.1, 10000};
  ScheduleSpec beta2{0.9, 0.99, 10000};
  ScheduleSpec ema_halflife{1e4, 2e5, 10000};  // in samples
  std::size_t batch = 256;
  std::size_t steps = 50000;
  std::size_t log_every = 500;
  std::size_t eval_samples = 10000;
  double adam_epsilon = 1e-8;
  double divergence_threshold = 1e6;
  UpdateOrder update = UpdateOrder::kAlternating;
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);

struct MetricsRow {
  std::size_t step = 0;  // index of the update this row describes
  std::size_t samples_seen = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double r1 = 0.0;  // applied penalty values at this step
  double r2 = 0.0;
  double gradnorm2_real = 0.0;
  double gradnorm2_fake = 0.0;
  double lr = 0.0;
  double gamma = 0.0;
  double beta2 = 0.0;
  double ema_halflife = 0.0;
  std::size_t coverage = 0;
  double reverse_kl = 0.0;
  std::size_t coverage_ema = 0;
  double reverse_kl_ema = 0.0;
  std::string status;  // running | completed | diverged
};

inline constexpr std::string_view kMetricsHeader =
    "step,samples_seen,loss_g,loss_d,r1,r2,gradnorm2_real,gradnorm2_fake,lr,gamma,beta2,ema_halflife,"
    "coverage,reverse_kl,coverage_ema,reverse_kl_ema,status";

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out);

struct RunResult {
  std::string status;  // completed | diverged
  std::string divergence_reason;
  std::vector<MetricsRow> metrics;
  Model generator;
  Model discriminator;
  ParamSet generator_ema;
};

/// The MLP players `train` builds for `config` on data of dimension `data_dim`.
struct Players {
  std::shared_ptr<const Mlp> generator;
  std::shared_ptr<const Mlp> discriminator;
};
Players make_players(const ExperimentConfig& config, std::size_t data_dim);

/// The fixed latent batch a run with `seed` evaluates mode coverage on.
Tensor evaluation_latents(const ExperimentConfig& config, std::uint64_t seed);

/// One deterministic run of `config` with `seed`.
RunResult train(const ExperimentConfig& config, std::uint64_t seed);

/// Generator samples from `latents` under `params`.
Tensor generate(const Network& generator, const ParamSet& params, const Tensor& latents);

/// Ratio of mean real-side to mean fake-side E||grad_x D||^2 over rows with
/// step >= from_step; nullopt when no such rows exist.
std::optional<double> gradnorm_ratio(const std::vector<MetricsRow>& rows, std::size_t from_step);

}  // namespace gandyn
