#include "cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gandyn/data.hpp"
#include "gandyn/dirac.hpp"
#include "gandyn/errors.hpp"
#include "gandyn/format.hpp"
#include "gandyn/gradcheck_suites.hpp"
#include "gandyn/rng.hpp"
#include "gandyn/spectrum.hpp"
#include "gandyn/training.hpp"

#ifndef GANDYN_VERSION
#define GANDYN_VERSION "0.0.0"
#endif

namespace gandyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reported with exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports "parse error at line L, column C: ..."
    throw UsageError(path.string() + ": " + e.what());
  }
}

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string canonical(const json& j) { return j.dump(); }

/// An output directory owned by one manifest. Files are written to a temporary
/// name and renamed into place; the manifest is rewritten at the end.
class RunDir {
 public:
  RunDir(fs::path dir, bool overwrite) : dir_(std::move(dir)) {
    if (fs::exists(dir_)) {
      if (!overwrite) throw UsageError("output directory " + dir_.string() + " exists; pass --overwrite to replace it");
      if (!fs::is_directory(dir_)) throw UsageError(dir_.string() + " exists and is not a directory");
      fs::remove_all(dir_);
    }
    fs::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    write_atomically(dir_ / name, content);
    artifacts_.push_back(name);
  }

  void write_params(const ParamSet& params) {
    save_params(params, dir_ / "params.bin.tmp", dir_ / "params.manifest.json.tmp");
    fs::rename(dir_ / "params.bin.tmp", dir_ / "params.bin");
    fs::rename(dir_ / "params.manifest.json.tmp", dir_ / "params.manifest.json");
    artifacts_.push_back("params.bin");
    artifacts_.push_back("params.manifest.json");
  }

  /// Writes manifest.json with `status` and the artifacts recorded so far.
  void manifest(json m, const std::string& status) {
    m["tool"] = "gandyn";
    m["tool_version"] = GANDYN_VERSION;
    m["rng"] = std::string(Rng::kAlgorithm);
    m["status"] = status;
    std::vector<std::string> files = artifacts_;
    std::sort(files.begin(), files.end());
    m["artifacts"] = files;
    write_atomically(dir_ / "manifest.json", m.dump(2) + "\n");
  }

  const fs::path& path() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> artifacts_;
};

json base_manifest(const std::string& command, const json& config, std::optional<std::uint64_t> seed) {
  json m;
  m["command"] = command;
  m["config_hash"] = "sha256:" + sha256_hex(canonical(config));
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["status_start"] = "running";
  return m;
}

// ---------------------------------------------------------------------------
// dirac

struct DiracOptions {
  double gamma = 0.0;
  double h = 0.01;
  std::string integrator = "euler_simultaneous";
  std::size_t steps = 1000;
  double theta0 = 1.0;
  double psi0 = 0.0;
  std::string out;
  bool overwrite = false;
};

int cmd_dirac(const DiracOptions& o, std::ostream& out) {
  const DiracConfig cfg{o.gamma, o.h, parse_integrator(o.integrator), o.steps};
  cfg.validate();
  const json config = {{"gamma", o.gamma},   {"h", o.h},         {"integrator", o.integrator},
                       {"steps", o.steps},   {"theta0", o.theta0}, {"psi0", o.psi0}};

  RunDir dir(o.out, o.overwrite);
  dir.write("config.json", config.dump(2) + "\n");
  const json manifest = base_manifest("dirac", config, std::nullopt);
  dir.manifest(manifest, "running");

  const Trajectory tr = simulate({o.theta0, o.psi0}, cfg);
  std::ostringstream csv;
  write_trajectory_csv(tr, csv);
  dir.write("trajectory.csv", csv.str());

  json report = to_json(spectrum_report(equilibrium_eigenvalues(o.gamma), o.h));
  report["gamma"] = o.gamma;
  report["integrator"] = o.integrator;
  report["update_moduli"] = update_operator_eigs(o.gamma, o.h).moduli;
  report["final_radius"] = tr.points.back().radius;
  report["diverged"] = tr.diverged;
  dir.write("eigenvalues.json", report.dump(2) + "\n");

  const std::string status = tr.diverged ? "diverged" : "completed";
  dir.manifest(manifest, status);
  out << "dirac: " << status << " after " << tr.points.back().step << " steps, radius "
      << format_double(tr.points.back().radius) << ", verdict " << report["verdict"].get<std::string>() << " -> "
      << dir.path().string() << "\n";
  return tr.diverged ? kDiverged : kOk;
}

// ---------------------------------------------------------------------------
// eigmap

struct EigmapOptions {
  std::vector<double> gammas{0.0, 0.1, 0.5, 1.0, 2.0};
  std::vector<double> hs{0.01, 0.1};
  std::string out;
  bool overwrite = false;
};

int cmd_eigmap(const EigmapOptions& o, std::ostream& out) {
  std::ostringstream csv;
  csv << "gamma,h,lambda1_re,lambda1_im,lambda2_re,lambda2_im,max_real_part,max_modulus,verdict\n";
  for (double gamma : o.gammas) {
    for (double h : o.hs) {
      if (!(gamma >= 0.0) || !(h > 0.0)) throw UsageError("eigmap needs gamma >= 0 and h > 0");
      const SpectrumReport r = spectrum_report(equilibrium_eigenvalues(gamma), h);
      csv << format_double(gamma) << ',' << format_double(h);
      for (const auto& l : r.eigenvalues) csv << ',' << format_double(l.real()) << ',' << format_double(l.imag());
      csv << ',' << format_double(r.max_real_part) << ',' << format_double(r.max_modulus) << ','
          << to_string(r.verdict) << '\n';
    }
  }
  if (o.out.empty()) {
    out << csv.str();
    return kOk;
  }
  const json config = {{"gammas", o.gammas}, {"hs", o.hs}};
  RunDir dir(o.out, o.overwrite);
  dir.write("config.json", config.dump(2) + "\n");
  dir.write("eigenvalues.csv", csv.str());
  dir.manifest(base_manifest("eigmap", config, std::nullopt), "completed");
  out << "eigmap: " << o.gammas.size() * o.hs.size() << " rows -> " << dir.path().string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  bool overwrite = false;
  std::size_t jobs = 1;
};

ParamSet snapshot(const RunResult& r) {
  ParamSet all = prefixed(r.generator.params, "G.");
  all.merge(prefixed(r.discriminator.params, "D."));
  all.merge(prefixed(r.generator_ema, "G_ema."));
  return all;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
  ExperimentConfig base;
  try {
    base = config_from_json(parse_json_file(o.config));
  } catch (const ContractError& e) {
    throw UsageError(o.config + ": " + e.what());
  }
  const std::vector<std::uint64_t> seeds = o.seeds.empty() ? base.seeds : o.seeds;

  // One seed writes straight into --out; several get one subdirectory each.
  std::vector<fs::path> dirs;
  if (seeds.size() == 1) {
    dirs.push_back(o.out);
  } else {
    if (fs::exists(o.out) && !o.overwrite)
      throw UsageError("output directory " + o.out + " exists; pass --overwrite to replace it");
    if (fs::exists(o.out)) fs::remove_all(o.out);
    for (auto s : seeds) dirs.push_back(fs::path(o.out) / ("seed_" + std::to_string(s)));
  }

  std::mutex io;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> diverged{false};
  std::vector<std::exception_ptr> errors(seeds.size());

  auto worker = [&] {
    for (std::size_t i; (i = next++) < seeds.size();) {
      try {
        ExperimentConfig c = base;
        c.seeds = {seeds[i]};
        const json config = config_to_json(c);
        RunDir dir(dirs[i], o.overwrite);
        dir.write("config.json", config.dump(2) + "\n");
        json manifest = base_manifest("train", config, seeds[i]);
        dir.manifest(manifest, "running");

        const auto t0 = std::chrono::steady_clock::now();
        const RunResult r = train(c, seeds[i]);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        std::ostringstream csv;
        write_metrics_csv(r.metrics, csv);
        dir.write("metrics.csv", csv.str());
        dir.write_params(snapshot(r));
        if (!r.divergence_reason.empty()) manifest["divergence_reason"] = r.divergence_reason;
        dir.manifest(manifest, r.status);

        if (r.status == "diverged") diverged = true;
        const MetricsRow& last = r.metrics.back();
        std::lock_guard lock(io);
        out << "seed " << seeds[i] << ": " << r.status << " at step " << last.step << ", coverage " << last.coverage
            << ", reverse_kl " << format_double(last.reverse_kl) << " (" << static_cast<long>(secs) << " s) -> "
            << dir.path().string() << "\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(o.jobs, 1, seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return diverged ? kDiverged : kOk;
}

// ---------------------------------------------------------------------------
// spectrum

struct SpectrumOptions {
  std::string probe = "dirac";
  double gamma = 0.0;
  double h = 0.01;
  std::size_t samples = 64;
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
  bool overwrite = false;
};

int cmd_spectrum(SpectrumOptions o, std::ostream& out) {
  if (!o.config.empty()) {
    const json j = parse_json_file(o.config);
    for (const auto& [key, value] : j.items()) {
      if (key == "probe") o.probe = value.get<std::string>();
      else if (key == "gamma") o.gamma = value.get<double>();
      else if (key == "h") o.h = value.get<double>();
      else if (key == "samples") o.samples = value.get<std::size_t>();
      else if (key == "seed") o.seed = value.get<std::uint64_t>();
      else throw UsageError(o.config + ": unknown key '" + key + "'");
    }
  }
  if (!(o.gamma >= 0.0) || !(o.h > 0.0)) throw UsageError("spectrum needs gamma >= 0 and h > 0");
  ProbePoint pp;
  if (o.probe == "dirac") pp = dirac_probe(o.gamma);
  else if (o.probe == "mean_slope") pp = mean_slope_probe(o.gamma, o.samples, o.seed);
  else if (o.probe == "affine_mlp") pp = affine_mlp_probe(o.gamma, o.seed);
  else throw UsageError("unknown probe '" + o.probe + "' (expected dirac, mean_slope or affine_mlp)");

  json report = to_json(spectrum_report(pp.probe, pp.point, o.h));
  report["probe"] = o.probe;
  report["gamma"] = o.gamma;
  report["dimension"] = pp.probe.dimension();
  out << report.dump(2) << "\n";
  if (!o.out.empty()) {
    const json config = {{"probe", o.probe}, {"gamma", o.gamma}, {"h", o.h}, {"samples", o.samples}, {"seed", o.seed}};
    RunDir dir(o.out, o.overwrite);
    dir.write("config.json", config.dump(2) + "\n");
    dir.write("spectrum.json", report.dump(2) + "\n");
    dir.manifest(base_manifest("spectrum", config, o.seed), "completed");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// modes

struct ModesOptions {
  std::string samples;
  std::string run;
  GridSpec grid;
  std::string out;
  bool overwrite = false;
};

json mode_json(const ModeReport& r, std::size_t n) {
  return {{"samples", n}, {"coverage", r.coverage}, {"reverse_kl", r.reverse_kl}, {"counts", r.counts}};
}

int cmd_modes(const ModesOptions& o, std::ostream& out) {
  json report;
  if (!o.samples.empty()) {
    o.grid.validate();
    std::ifstream in(o.samples);
    if (!in) throw UsageError("cannot read " + o.samples);
    const Tensor x = read_samples_csv(in);
    const Dataset data = make_grid(o.grid);
    report = mode_json(mode_report(x, data.centers()), x.dim(0));
    report["source"] = o.samples;
    report["modes"] = data.modes();
  } else {
    const fs::path run(o.run);
    const json manifest = parse_json_file(run / "manifest.json");
    ExperimentConfig c;
    try {
      c = config_from_json(parse_json_file(run / "config.json"));
    } catch (const ContractError& e) {
      throw UsageError((run / "config.json").string() + ": " + e.what());
    }
    const std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();
    const Dataset data = c.dataset.build();
    if (data.modes() == 0) throw UsageError("the run's dataset has no discrete modes");
    const ParamSet all = load_params(run / "params.bin", run / "params.manifest.json");
    const auto strip = [&](const std::string& prefix) {
      ParamSet p;
      for (const auto& [name, t] : all)
        if (name.starts_with(prefix)) p.emplace(name.substr(prefix.size()), t);
      return p;
    };
    const Players players = make_players(c, data.dim());
    const Tensor z = evaluation_latents(c, seed);
    report["source"] = o.run;
    report["modes"] = data.modes();
    report["generator"] =
        mode_json(mode_report(generate(*players.generator, strip("G."), z), data.centers()), z.dim(0));
    report["generator_ema"] =
        mode_json(mode_report(generate(*players.generator, strip("G_ema."), z), data.centers()), z.dim(0));
  }
  out << report.dump(2) << "\n";
  if (!o.out.empty()) {
    const json config = {{"samples", o.samples}, {"run", o.run}};
    RunDir dir(o.out, o.overwrite);
    dir.write("modes.json", report.dump(2) + "\n");
    dir.manifest(base_manifest("modes", config, std::nullopt), "completed");
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(const std::string& suite, std::ostream& out) {
  std::size_t failed = 0;
  const auto cases = run_gradcheck_suite(suite);
  for (const auto& c : cases) {
    failed += !c.passed();
    char line[256];
    std::snprintf(line, sizeof line, "[%s] %s/%s error %.3e (threshold %.0e)\n", c.passed() ? "PASS" : "FAIL",
                  c.suite.c_str(), c.name.c_str(), c.error, c.threshold);
    out << line;
  }
  out << cases.size() - failed << "/" << cases.size() << " checks passed\n";
  return failed == 0 ? kOk : kNumerical;
}

}  // namespace

std::string sha256_hex(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned i = 0; i < len; ++i) {
    hex += kHex[md[i] >> 4];
    hex += kHex[md[i] & 15];
  }
  return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dynamics of regularized two-player GAN objectives: toy simulations, spectra and training runs.",
               "gandyn"};
  // Only the long form: subcommands use --h for the step size.
  app.set_help_flag("--help", "Print this help message and exit");
  app.set_version_flag("--version", GANDYN_VERSION);
  app.require_subcommand(1);

  DiracOptions dirac;
  auto* dirac_cmd = app.add_subcommand("dirac", "Simulate the one-parameter Dirac game; writes trajectory.csv and "
                                                "eigenvalues.json to --out");
  dirac_cmd->add_option("--gamma", dirac.gamma, "R1 weight (>= 0)")->capture_default_str();
  dirac_cmd->add_option("--h", dirac.h, "step size (> 0)")->capture_default_str();
  dirac_cmd->add_option("--integrator", dirac.integrator, "euler_simultaneous | euler_alternating | rk4_continuous")
      ->capture_default_str();
  dirac_cmd->add_option("--steps", dirac.steps, "number of steps")->capture_default_str();
  dirac_cmd->add_option("--theta0", dirac.theta0, "initial generator parameter")->capture_default_str();
  dirac_cmd->add_option("--psi0", dirac.psi0, "initial critic parameter")->capture_default_str();
  dirac_cmd->add_option("--out", dirac.out, "output directory")->required();
  dirac_cmd->add_flag("--overwrite", dirac.overwrite, "replace an existing output directory");

  EigmapOptions eigmap;
  auto* eigmap_cmd = app.add_subcommand("eigmap", "Equilibrium and update-operator eigenvalues of the Dirac game over "
                                                  "a grid of gamma and h (CSV)");
  eigmap_cmd->add_option("--gammas", eigmap.gammas, "comma-separated R1 weights")->delimiter(',')->capture_default_str();
  eigmap_cmd->add_option("--hs", eigmap.hs, "comma-separated step sizes")->delimiter(',')->capture_default_str();
  eigmap_cmd->add_option("--out", eigmap.out, "output directory (default: CSV on stdout)");
  eigmap_cmd->add_flag("--overwrite", eigmap.overwrite, "replace an existing output directory");

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train on a JSON experiment config; one run directory per seed");
  train_cmd->add_option("--config", train_opts.config, "experiment config (JSON)")->required();
  train_cmd->add_option("--seed", train_opts.seeds, "seed(s) overriding the config's list")->delimiter(',');
  train_cmd->add_option("--out", train_opts.out, "output directory")->required();
  train_cmd->add_option("--jobs", train_opts.jobs, "seeds trained in parallel")->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_flag("--overwrite", train_opts.overwrite, "replace an existing output directory");

  SpectrumOptions spectrum;
  auto* spectrum_cmd = app.add_subcommand("spectrum", "Jacobian spectrum of the training field at a constructed "
                                                      "equilibrium (JSON on stdout)");
  auto* probe_opt = spectrum_cmd->add_option("--probe", spectrum.probe, "dirac | mean_slope | affine_mlp")
                        ->capture_default_str();
  auto* gamma_opt = spectrum_cmd->add_option("--gamma", spectrum.gamma, "penalty weight")->capture_default_str();
  spectrum_cmd->add_option("--h", spectrum.h, "step size for the update operator")->capture_default_str();
  auto* samples_opt = spectrum_cmd->add_option("--samples", spectrum.samples, "batch size of the mean_slope probe")
                          ->capture_default_str();
  auto* seed_opt = spectrum_cmd->add_option("--seed", spectrum.seed, "probe seed")->capture_default_str();
  spectrum_cmd->add_option("--config", spectrum.config, "probe config (JSON with probe, gamma, h, samples, seed)")
      ->excludes(probe_opt)
      ->excludes(gamma_opt)
      ->excludes(samples_opt)
      ->excludes(seed_opt);
  spectrum_cmd->add_option("--out", spectrum.out, "also write spectrum.json into this directory");
  spectrum_cmd->add_flag("--overwrite", spectrum.overwrite, "replace an existing output directory");

  ModesOptions modes;
  auto* modes_cmd = app.add_subcommand("modes", "Mode coverage and reverse KL of a sample CSV or a training run");
  auto* samples_src = modes_cmd->add_option("--samples", modes.samples, "CSV with columns x0,x1[,mode]");
  auto* run_src = modes_cmd->add_option("--run", modes.run, "run directory written by `gandyn train`");
  samples_src->excludes(run_src);
  modes_cmd->add_option("--dims", modes.grid.dims, "grid dimension for --samples")->capture_default_str();
  modes_cmd->add_option("--modes-per-axis", modes.grid.modes_per_axis, "grid modes per axis for --samples")
      ->capture_default_str();
  modes_cmd->add_option("--spacing", modes.grid.spacing, "grid spacing for --samples")->capture_default_str();
  modes_cmd->add_option("--out", modes.out, "also write modes.json into this directory");
  modes_cmd->add_flag("--overwrite", modes.overwrite, "replace an existing output directory");

  std::string suite = "all";
  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks; non-zero exit on failure");
  gradcheck_cmd->add_option("suite", suite, "primitives | composed | penalties | models | all")->capture_default_str();

  CLI::App* active = &app;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (auto* sub : app.get_subcommands()) active = sub;
    if (modes_cmd->parsed() && modes.samples.empty() == modes.run.empty())
      throw UsageError("modes needs exactly one of --samples or --run");

    if (dirac_cmd->parsed()) return cmd_dirac(dirac, out);
    if (eigmap_cmd->parsed()) return cmd_eigmap(eigmap, out);
    if (train_cmd->parsed()) return cmd_train(train_opts, out);
    if (spectrum_cmd->parsed()) return cmd_spectrum(spectrum, out);
    if (modes_cmd->parsed()) return cmd_modes(modes, out);
    return cmd_gradcheck(suite, out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    for (auto* sub : app.get_subcommands()) active = sub;
    err << active->help();
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    // Invalid parameter values or combinations.
    err << "error: " << e.what() << "\n\n" << active->help();
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}

}  // namespace gandyn::cli
