#include "gandyn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <set>

#include "gandyn/format.hpp"

namespace gandyn {

// ---------------------------------------------------------------------------
// Schedules, optimiser, EMA

void ScheduleSpec::validate(std::string_view name) const {
  if (!std::isfinite(start) || !std::isfinite(target)) {
    throw ConfigError("schedules." + std::string(name) + ": start and target must be finite");
  }
}

double cosine_burnin(const ScheduleSpec& s, std::size_t t) {
  if (t >= s.burnin) return s.target;
  if (t == 0) return s.start;  // exact, whatever the rounding of target + (start - target)
  const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(s.burnin);
  return s.target + (s.start - s.target) * (1.0 + std::cos(phase)) / 2.0;
}

void adam_step(OptState& state, ParamSet& params, const ParamSet& grads, double lr, double beta2) {
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("adam: beta2 must lie in [0, 1)");
  ++state.step;
  state.beta2_product *= beta2;
  const double correction = 1.0 - state.beta2_product;
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) throw ContractError("adam: no gradient for '" + name + "'");
    const Tensor& g = git->second;
    if (g.shape() != p.shape()) throw ShapeError(0, "adam: gradient shape mismatch for '" + name + "'");
    auto [vit, inserted] = state.second_moment.try_emplace(name, p.shape(), 0.0);
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(v[i] / correction) + state.epsilon);
    }
  }
}

double ema_decay(double minibatch, double half_life) {
  if (!(half_life > 0.0)) throw ContractError("EMA half-life must be > 0");
  if (!(minibatch > 0.0)) throw ContractError("EMA minibatch must be > 0");
  return std::pow(0.5, minibatch / half_life);
}

void ema_update(EmaState& state, const ParamSet& current, double beta) {
  for (const auto& [name, p] : current) {
    auto [it, inserted] = state.shadow.try_emplace(name, p);
    if (inserted) continue;
    Tensor& s = it->second;
    for (std::size_t i = 0; i < p.size(); ++i) s[i] = beta * s[i] + (1.0 - beta) * p[i];
  }
}

// ---------------------------------------------------------------------------
// Configuration

Dataset DatasetConfig::build() const {
  if (kind == "grid") return make_grid(grid);
  ShapeSpec s = shape;
  s.kind = parse_shape_kind(kind);
  return make_shape(s);
}

void ExperimentConfig::validate() const {
  try {
    objective.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("objective: ") + e.what());
  }
  try {
    (void)dataset.build();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  if (model.z_dim == 0) throw ConfigError("model.z_dim must be positive");
  if (model.g_hidden.empty() || model.d_hidden.empty()) throw ConfigError("model: hidden layer lists must be non-empty");
  for (auto w : model.g_hidden) {
    if (w == 0) throw ConfigError("model.g_hidden: widths must be positive");
  }
  for (auto w : model.d_hidden) {
    if (w == 0) throw ConfigError("model.d_hidden: widths must be positive");
  }
  lr.validate("lr");
  gamma.validate("gamma");
  beta2.validate("beta2");
  ema_halflife.validate("ema_halflife");
  if (lr.start <= 0.0 || lr.target <= 0.0) throw ConfigError("schedules.lr: values must be > 0");
  if (gamma.start < 0.0 || gamma.target < 0.0) throw ConfigError("schedules.gamma: values must be >= 0");
  if (beta2.start < 0.0 || beta2.start >= 1.0 || beta2.target < 0.0 || beta2.target >= 1.0) {
    throw ConfigError("schedules.beta2: values must lie in [0, 1)");
  }
  if (ema_halflife.start <= 0.0 || ema_halflife.target <= 0.0) {
    throw ConfigError("schedules.ema_halflife: values must be > 0");
  }
  if (batch == 0) throw ConfigError("training.batch must be positive");
  if (steps == 0) throw ConfigError("training.steps must be positive");
  if (log_every == 0) throw ConfigError("training.log_every must be positive");
  if (eval_samples == 0) throw ConfigError("training.eval_samples must be positive");
  if (!(adam_epsilon > 0.0)) throw ConfigError("training.adam_epsilon must be > 0");
  if (!(divergence_threshold > 0.0)) throw ConfigError("training.divergence_threshold must be > 0");
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
}

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(path + "." + key + ": unknown key");
    }
  }
}

const json& required(const json& obj, std::string_view key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError("missing required key '" + path + (path.empty() ? "" : ".") + std::string(key) + "'");
  return *it;
}

template <class T>
void read(const json& obj, std::string_view key, const std::string& path, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError("");
    }
    out = it->get<T>();
  } catch (const std::exception&) {
    throw ConfigError(path + "." + std::string(key) + ": wrong type (" + it->dump() + ")");
  }
}

ScheduleSpec read_schedule(const json& obj, const std::string& path, ScheduleSpec s) {
  check_keys(obj, path, {"start", "target", "burnin"});
  read(obj, "start", path, s.start);
  read(obj, "target", path, s.target);
  read(obj, "burnin", path, s.burnin);
  return s;
}

json schedule_json(const ScheduleSpec& s) { return {{"start", s.start}, {"target", s.target}, {"burnin", s.burnin}}; }

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  check_keys(j, "config", {"objective", "dataset", "model", "schedules", "training", "seeds"});
  ExperimentConfig c;

  const json& obj = required(j, "objective", "");
  check_keys(obj, "objective", {"kind", "gamma_r1", "gamma_r2", "lazy_interval", "pairing"});
  std::string text = std::string(to_string(c.objective.kind));
  read(obj, "kind", "objective", text);
  try {
    c.objective.kind = parse_objective_kind(text);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("objective.kind: ") + e.what());
  }
  read(obj, "gamma_r1", "objective", c.objective.gamma_r1);
  read(obj, "gamma_r2", "objective", c.objective.gamma_r2);
  read(obj, "lazy_interval", "objective", c.objective.lazy_interval);
  text = std::string(to_string(c.objective.pairing));
  read(obj, "pairing", "objective", text);
  try {
    c.objective.pairing = parse_pairing(text);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("objective.pairing: ") + e.what());
  }

  const json& ds = required(j, "dataset", "");
  check_keys(ds, "dataset",
             {"kind", "dims", "modes_per_axis", "spacing", "sigma", "radius", "half_length", "ring_modes"});
  c.dataset.kind = required(ds, "kind", "dataset").is_string() ? ds.at("kind").get<std::string>() : "";
  if (c.dataset.kind == "grid") {
    read(ds, "dims", "dataset", c.dataset.grid.dims);
    read(ds, "modes_per_axis", "dataset", c.dataset.grid.modes_per_axis);
    read(ds, "spacing", "dataset", c.dataset.grid.spacing);
    read(ds, "sigma", "dataset", c.dataset.grid.sigma);
  } else if (c.dataset.kind == "ring" || c.dataset.kind == "line" || c.dataset.kind == "circle") {
    read(ds, "radius", "dataset", c.dataset.shape.radius);
    read(ds, "half_length", "dataset", c.dataset.shape.half_length);
    read(ds, "ring_modes", "dataset", c.dataset.shape.ring_modes);
    read(ds, "sigma", "dataset", c.dataset.shape.sigma);
  } else {
    throw ConfigError("dataset.kind: expected grid, ring, line or circle");
  }

  if (auto it = j.find("model"); it != j.end()) {
    check_keys(*it, "model", {"z_dim", "g_hidden", "d_hidden", "slope", "residual"});
    read(*it, "z_dim", "model", c.model.z_dim);
    read(*it, "g_hidden", "model", c.model.g_hidden);
    read(*it, "d_hidden", "model", c.model.d_hidden);
    read(*it, "slope", "model", c.model.slope);
    read(*it, "residual", "model", c.model.residual);
  }
  if (auto it = j.find("schedules"); it != j.end()) {
    check_keys(*it, "schedules", {"lr", "gamma", "beta2", "ema_halflife"});
    if (auto s = it->find("lr"); s != it->end()) c.lr = read_schedule(*s, "schedules.lr", c.lr);
    if (auto s = it->find("gamma"); s != it->end()) c.gamma = read_schedule(*s, "schedules.gamma", c.gamma);
    if (auto s = it->find("beta2"); s != it->end()) c.beta2 = read_schedule(*s, "schedules.beta2", c.beta2);
    if (auto s = it->find("ema_halflife"); s != it->end()) {
      c.ema_halflife = read_schedule(*s, "schedules.ema_halflife", c.ema_halflife);
    }
  }
  if (auto it = j.find("training"); it != j.end()) {
    check_keys(*it, "training",
               {"batch", "steps", "log_every", "eval_samples", "adam_epsilon", "divergence_threshold", "update"});
    read(*it, "batch", "training", c.batch);
    read(*it, "steps", "training", c.steps);
    read(*it, "log_every", "training", c.log_every);
    read(*it, "eval_samples", "training", c.eval_samples);
    read(*it, "adam_epsilon", "training", c.adam_epsilon);
    read(*it, "divergence_threshold", "training", c.divergence_threshold);
    std::string update = "alternating";
    read(*it, "update", "training", update);
    if (update == "alternating") {
      c.update = UpdateOrder::kAlternating;
    } else if (update == "simultaneous") {
      c.update = UpdateOrder::kSimultaneous;
    } else {
      throw ConfigError("training.update: expected alternating or simultaneous");
    }
  }
  read(j, "seeds", "config", c.seeds);
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json ds{{"kind", c.dataset.kind}};
  if (c.dataset.kind == "grid") {
    ds["dims"] = c.dataset.grid.dims;
    ds["modes_per_axis"] = c.dataset.grid.modes_per_axis;
    ds["spacing"] = c.dataset.grid.spacing;
    ds["sigma"] = c.dataset.grid.sigma;
  } else {
    ds["radius"] = c.dataset.shape.radius;
    ds["half_length"] = c.dataset.shape.half_length;
    ds["ring_modes"] = c.dataset.shape.ring_modes;
    ds["sigma"] = c.dataset.shape.sigma;
  }
  return {
      {"objective",
       {{"kind", to_string(c.objective.kind)},
        {"gamma_r1", c.objective.gamma_r1},
        {"gamma_r2", c.objective.gamma_r2},
        {"lazy_interval", c.objective.lazy_interval},
        {"pairing", to_string(c.objective.pairing)}}},
      {"dataset", ds},
      {"model",
       {{"z_dim", c.model.z_dim},
        {"g_hidden", c.model.g_hidden},
        {"d_hidden", c.model.d_hidden},
        {"slope", c.model.slope},
        {"residual", c.model.residual}}},
      {"schedules",
       {{"lr", schedule_json(c.lr)},
        {"gamma", schedule_json(c.gamma)},
        {"beta2", schedule_json(c.beta2)},
        {"ema_halflife", schedule_json(c.ema_halflife)}}},
      {"training",
       {{"batch", c.batch},
        {"steps", c.steps},
        {"log_every", c.log_every},
        {"eval_samples", c.eval_samples},
        {"adam_epsilon", c.adam_epsilon},
        {"divergence_threshold", c.divergence_threshold},
        {"update", c.update == UpdateOrder::kAlternating ? "alternating" : "simultaneous"}}},
      {"seeds", c.seeds},
  };
}

// ---------------------------------------------------------------------------
// Metrics

void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << r.samples_seen << ',' << format_double(r.loss_g) << ',' << format_double(r.loss_d) << ','
        << format_double(r.r1) << ',' << format_double(r.r2) << ',' << format_double(r.gradnorm2_real) << ','
        << format_double(r.gradnorm2_fake) << ',' << format_double(r.lr) << ',' << format_double(r.gamma) << ','
        << format_double(r.beta2) << ',' << format_double(r.ema_halflife) << ',' << r.coverage << ','
        << format_double(r.reverse_kl) << ',' << r.coverage_ema << ',' << format_double(r.reverse_kl_ema) << ','
        << r.status << '\n';
  }
}

std::optional<double> gradnorm_ratio(const std::vector<MetricsRow>& rows, std::size_t from_step) {
  double real = 0.0, fake = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.step < from_step || r.status == "diverged") continue;
    real += r.gradnorm2_real;
    fake += r.gradnorm2_fake;
    ++n;
  }
  if (n == 0 || fake <= 0.0) return std::nullopt;
  return real / fake;
}

// ---------------------------------------------------------------------------
// Training

Tensor generate(const Network& generator, const ParamSet& params, const Tensor& latents) {
  Graph g;
  Var z = variable(g, "z", latents.shape());
  const NodeId out = generator.forward(g, z, "G.").id;
  Evaluator ev(std::move(g), {out});
  ev.bind("z", latents);
  ev.bind_known(prefixed(params, "G."));
  ev.run();
  return ev.value(out);
}

namespace {

ParamSet collect(const Evaluator& ev, const std::vector<std::string>& names, std::span<const NodeId> ids) {
  ParamSet out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], ev.value(ids[i]));
  return out;
}

std::vector<std::string> local_names(const Network& net) {
  std::vector<std::string> out;
  for (const auto& p : net.parameters()) out.push_back(p.name);
  return out;
}

std::vector<NodeId> declare(Graph& g, const Network& net, const std::string& prefix) {
  std::vector<NodeId> ids;
  for (const auto& p : net.parameters()) ids.push_back(g.variable(prefix + p.name, p.shape));
  return ids;
}

// Critic update graph. Fakes enter as a leaf, so nothing here reaches G.
// Two plans share it: with penalties (weights bound per step) and without,
// for the off-steps of lazy regularisation.
struct CriticStep {
  std::unique_ptr<Evaluator> full;
  std::unique_ptr<Evaluator> plain;
  NodeId value = 0, loss_d = 0, r1 = 0, r2 = 0, gn_real = 0, gn_fake = 0;
  std::vector<NodeId> grads_full, grads_plain;

  CriticStep(const Network& d, ObjectiveKind kind, std::size_t batch, std::size_t dim) {
    Graph g;
    Var reals = variable(g, "x_real", {batch, dim});
    Var fakes = variable(g, "x_fake", {batch, dim});
    Var g1 = variable(g, "gamma_r1", {});
    Var g2 = variable(g, "gamma_r2", {});
    const LossNodes loss = build_losses(kind, d, "D.", fakes, reals, g1, g2);
    value = loss.value.id;
    loss_d = loss.loss_d.id;
    r1 = loss.r1.id;
    r2 = loss.r2.id;
    gn_real = loss.gradnorm2_real.id;
    gn_fake = loss.gradnorm2_fake.id;
    const auto ids = declare(g, d, "D.");
    grads_full = g.gradients(loss_d, ids);
    const NodeId neg_value = g.neg(value);
    grads_plain = g.gradients(neg_value, ids);

    std::vector<NodeId> out_full{value, loss_d, r1, r2, gn_real, gn_fake};
    out_full.insert(out_full.end(), grads_full.begin(), grads_full.end());
    std::vector<NodeId> out_plain{value, gn_real, gn_fake};
    out_plain.insert(out_plain.end(), grads_plain.begin(), grads_plain.end());
    full = std::make_unique<Evaluator>(g, std::move(out_full));
    plain = std::make_unique<Evaluator>(std::move(g), std::move(out_plain));
  }
};

// Generator update graph: L(G(z), x) differentiated with respect to G only.
struct GeneratorStep {
  std::unique_ptr<Evaluator> eval;
  NodeId value = 0;
  std::vector<NodeId> grads;

  GeneratorStep(const Network& gen, const Network& d, ObjectiveKind kind, std::size_t batch, std::size_t z_dim,
                std::size_t dim) {
    Graph g;
    Var z = variable(g, "z", {batch, z_dim});
    Var reals = variable(g, "x_real", {batch, dim});
    Var fakes = gen.forward(g, z, "G.");
    value = objective_value(kind, d.forward(g, fakes, "D."), d.forward(g, reals, "D.")).id;
    grads = g.gradients(value, declare(g, gen, "G."));
    std::vector<NodeId> outs{value};
    outs.insert(outs.end(), grads.begin(), grads.end());
    eval = std::make_unique<Evaluator>(std::move(g), std::move(outs));
  }
};

struct Sampler {
  std::unique_ptr<Evaluator> eval;
  NodeId out = 0;

  Sampler(const Network& gen, std::size_t batch, std::size_t z_dim) {
    Graph g;
    Var z = variable(g, "z", {batch, z_dim});
    out = gen.forward(g, z, "G.").id;
    eval = std::make_unique<Evaluator>(std::move(g), std::vector<NodeId>{out});
  }

  const Tensor& run(const Tensor& z, const ParamSet& params) {
    eval->bind("z", z);
    for (const auto& [name, value] : params) eval->bind("G." + name, value);
    eval->run();
    return eval->value(out);
  }
};

void bind_params(Evaluator& ev, const ParamSet& params, const std::string& prefix) {
  for (const auto& [name, value] : params) ev.bind(prefix + name, value);
}

Tensor normal_batch(std::size_t n, std::size_t k, Rng& rng) {
  Tensor t({n, k});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
  return t;
}

void permute_rows(Tensor& x, Rng& rng) {
  // Fisher-Yates on rows.
  const std::size_t n = x.dim(0), d = x.dim(1);
  for (std::size_t i = n; i-- > 1;) {
    const auto j = std::min(i, static_cast<std::size_t>(rng.uniform() * static_cast<double>(i + 1)));
    for (std::size_t c = 0; c < d; ++c) std::swap(x[i * d + c], x[j * d + c]);
  }
}

}  // namespace

Players make_players(const ExperimentConfig& config, std::size_t dim) {
  MlpSpec gs;
  gs.input_dim = config.model.z_dim;
  gs.hidden = config.model.g_hidden;
  gs.output_dim = dim;
  gs.slope = config.model.slope;
  gs.residual = config.model.residual;
  MlpSpec ds;
  ds.input_dim = dim;
  ds.hidden = config.model.d_hidden;
  ds.output_dim = 1;
  ds.slope = config.model.slope;
  ds.residual = config.model.residual;
  ds.scalar_output = true;
  return {std::make_shared<const Mlp>(gs), std::make_shared<const Mlp>(ds)};
}

Tensor evaluation_latents(const ExperimentConfig& config, std::uint64_t seed) {
  Rng eval_rng = Rng(seed).split("eval");
  return normal_batch(config.eval_samples, config.model.z_dim, eval_rng);
}

RunResult train(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  const Dataset data = config.dataset.build();
  const std::size_t dim = data.dim();
  const std::size_t batch = config.batch;
  const Players players = make_players(config, dim);
  const std::shared_ptr<const Mlp>& gen = players.generator;
  const std::shared_ptr<const Mlp>& disc = players.discriminator;

  const Rng root(seed);
  Rng g_init = root.split("init.generator");
  Rng d_init = root.split("init.discriminator");
  Rng data_rng = root.split("data");
  Rng latent_rng = root.split("latent");
  Rng pairing_rng = root.split("pairing");

  RunResult result;
  result.generator = Model{gen, gen->initialize(g_init)};
  result.discriminator = Model{disc, disc->initialize(d_init)};
  ParamSet& theta = result.generator.params;
  ParamSet& psi = result.discriminator.params;
  EmaState ema;
  ema_update(ema, theta, 0.0);

  OptState g_opt, d_opt;
  g_opt.epsilon = d_opt.epsilon = config.adam_epsilon;

  CriticStep critic(*disc, config.objective.kind, batch, dim);
  GeneratorStep generator(*gen, *disc, config.objective.kind, batch, config.model.z_dim, dim);
  Sampler sampler(*gen, batch, config.model.z_dim);
  Sampler eval_sampler(*gen, config.eval_samples, config.model.z_dim);
  const Tensor eval_latents = evaluation_latents(config, seed);
  const std::vector<std::string> g_names = local_names(*gen);
  const std::vector<std::string> d_names = local_names(*disc);

  auto evaluate_modes = [&](MetricsRow& row) {
    if (data.modes() == 0) return;
    const ModeReport now = mode_report(eval_sampler.run(eval_latents, theta), data.centers());
    row.coverage = now.coverage;
    row.reverse_kl = now.reverse_kl;
    const ModeReport avg = mode_report(eval_sampler.run(eval_latents, ema.shadow), data.centers());
    row.coverage_ema = avg.coverage;
    row.reverse_kl_ema = avg.reverse_kl;
  };

  for (std::size_t t = 0; t < config.steps; ++t) {
    MetricsRow row;
    row.step = t;
    row.samples_seen = (t + 1) * batch;
    row.lr = cosine_burnin(config.lr, t);
    row.gamma = cosine_burnin(config.gamma, t);
    row.beta2 = cosine_burnin(config.beta2, t);
    row.ema_halflife = cosine_burnin(config.ema_halflife, t);
    const double w1 = effective_gamma(config.objective.gamma_r1 * row.gamma, config.objective.lazy_interval, t);
    const double w2 = effective_gamma(config.objective.gamma_r2 * row.gamma, config.objective.lazy_interval, t);
    const bool penalised = w1 > 0.0 || w2 > 0.0;

    Tensor reals = data.sample(batch, data_rng);
    const Tensor z = normal_batch(batch, config.model.z_dim, latent_rng);
    if (config.objective.pairing == Pairing::kPermuted) permute_rows(reals, pairing_rng);

    try {
      const Tensor& fakes = sampler.run(z, theta);

      Evaluator& ev = penalised ? *critic.full : *critic.plain;
      ev.bind("x_real", reals);
      ev.bind("x_fake", fakes);
      if (penalised) {
        ev.bind("gamma_r1", Tensor::scalar(w1));
        ev.bind("gamma_r2", Tensor::scalar(w2));
      }
      bind_params(ev, psi, "D.");
      ev.run();
      const double value = ev.value(critic.value).item();
      row.loss_g = value;
      row.gradnorm2_real = ev.value(critic.gn_real).item();
      row.gradnorm2_fake = ev.value(critic.gn_fake).item();
      if (penalised) {
        row.r1 = ev.value(critic.r1).item();
        row.r2 = ev.value(critic.r2).item();
        row.loss_d = ev.value(critic.loss_d).item();
      } else {
        row.loss_d = -value;
      }
      if (row.gradnorm2_fake > config.divergence_threshold) {
        throw DivergenceError(critic.gn_fake, "fake-side input-gradient norm " + format_double(row.gradnorm2_fake) +
                                                  " exceeds " + format_double(config.divergence_threshold));
      }
      const ParamSet d_grads = collect(ev, d_names, penalised ? critic.grads_full : critic.grads_plain);

      auto generator_grads = [&] {
        Evaluator& gev = *generator.eval;
        gev.bind("z", z);
        gev.bind("x_real", reals);
        bind_params(gev, theta, "G.");
        bind_params(gev, psi, "D.");
        gev.run();
        return collect(gev, g_names, generator.grads);
      };

      if (config.update == UpdateOrder::kSimultaneous) {
        const ParamSet g_grads = generator_grads();
        adam_step(d_opt, psi, d_grads, row.lr, row.beta2);
        adam_step(g_opt, theta, g_grads, row.lr, row.beta2);
      } else {
        adam_step(d_opt, psi, d_grads, row.lr, row.beta2);
        const ParamSet g_grads = generator_grads();
        adam_step(g_opt, theta, g_grads, row.lr, row.beta2);
      }
      ema_update(ema, theta, ema_decay(static_cast<double>(batch), row.ema_halflife));

      const bool last = t + 1 == config.steps;
      if (t % config.log_every == 0 || last) {
        evaluate_modes(row);
        row.status = last ? "completed" : "running";
        result.metrics.push_back(std::move(row));
      }
    } catch (const DivergenceError& e) {
      row.status = "diverged";
      result.status = "diverged";
      result.divergence_reason = "step " + std::to_string(t) + ": " + e.what();
      result.metrics.push_back(std::move(row));
      result.generator_ema = std::move(ema.shadow);
      return result;
    }
  }
  result.status = "completed";
  result.generator_ema = std::move(ema.shadow);
  return result;
}

}  // namespace gandyn
