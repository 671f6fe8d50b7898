// stsep: simulate, fit, select, compare-ica, gradcheck, replay.
//
// Exit codes: 0 success, 2 usage error, 3 runtime error, 4 a check
// (gradcheck, replay comparison) failed.

#include <iostream>
#include <thread>

#include "CLI11.hpp"

#include "commands.hpp"

namespace cmd = stsep::cli;
using stsep::Json;

namespace {

int DefaultThreads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// Command-line overrides win over the config file's sections.
struct FitOverrides {
  std::optional<int> iters;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  int threads = DefaultThreads();

  void Add(CLI::App* app) {
    app->add_option("--iters", iters, "Maximum Adam iterations")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
    app->add_option("--seed", seed, "Fit seed");
    app->add_option("--threads", threads, "Worker threads for the likelihood reductions")
        ->check(CLI::PositiveNumber);
  }
  void Apply(Json& fit) const {
    if (iters) fit["max_iters"] = *iters;
    if (lr) fit["learning_rate"] = *lr;
    if (seed) fit["seed"] = *seed;
    fit["threads"] = threads;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational spatio-temporal source separation"};
  app.set_version_flag("--version", std::string(stsep::kVersion));
  app.require_subcommand(1);

  std::string out;
  std::string config;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic data set");
  simulate->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  simulate->add_option("--out", out, "Output directory")->required();
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--seed", sim_seed, "Data seed");

  auto* fit = app.add_subcommand("fit", "Fit the model to a data matrix");
  std::string data;
  bool use_times = false;
  bool learn_sigma = false;
  int sources = 3;
  int features = 10;
  std::optional<double> sigma, lambda;
  std::optional<int> mc;
  int progress = 0;
  FitOverrides fit_ov;
  fit->add_option("--data", data, "Data matrix (.bin or .csv)")->required()->check(CLI::ExistingFile);
  fit->add_flag("--times", use_times, "Use the observed times in the file and hold them fixed");
  fit->add_option("--sources,-n", sources, "Number of sources")->check(CLI::PositiveNumber);
  fit->add_option("--features,-J", features, "Random Fourier features per source")
      ->check(CLI::PositiveNumber);
  fit->add_option("--sigma", sigma, "Noise standard deviation (initial value with --learn-sigma)")
      ->check(CLI::PositiveNumber);
  fit->add_flag("--learn-sigma", learn_sigma, "Optimise the noise level");
  fit->add_option("--lambda", lambda, "Monotonicity constraint sharpness")->check(CLI::PositiveNumber);
  fit->add_option("--mc", mc, "Monte Carlo draws per gradient step")->check(CLI::PositiveNumber);
  fit->add_option("--config", config, "Experiment config; its model/fit sections seed the defaults")
      ->check(CLI::ExistingFile);
  fit->add_option("--progress", progress, "Report every N iterations on stderr")
      ->check(CLI::NonNegativeNumber);
  fit->add_option("--out", out, "Output directory")->required();
  fit_ov.Add(fit);

  auto* select = app.add_subcommand("select", "Sweep the number of sources over simulated folds");
  int folds = 10, smin = 1, smax = 4;
  FitOverrides select_ov;
  select->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  select->add_option("--folds", folds, "Number of simulated data sets")->check(CLI::PositiveNumber);
  select->add_option("--sources-min", smin, "Smallest number of sources")->check(CLI::PositiveNumber);
  select->add_option("--sources-max", smax, "Largest number of sources")->check(CLI::PositiveNumber);
  select->add_option("--out", out, "Output directory")->required();
  select_ov.Add(select);

  auto* compare = app.add_subcommand("compare-ica", "Known-times comparison against FastICA");
  FitOverrides compare_ov;
  compare->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  compare->add_option("--out", out, "Output directory")->required();
  compare_ov.Add(compare);

  auto* gradcheck = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  std::string instance = "tiny";
  std::uint64_t gc_seed = 0;
  gradcheck->add_option("--instance", instance, "Problem size")
      ->check(CLI::IsMember({"tiny", "small"}));
  gradcheck->add_option("--seed", gc_seed, "Instance seed");
  gradcheck->add_option("--out", out, "Output directory")->required();

  auto* replay = app.add_subcommand("replay", "Re-run a recorded manifest and compare outputs");
  std::string manifest;
  replay->add_option("manifest", manifest, "manifest.json of an earlier run")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cmd::kExitOk : cmd::kExitUsage;
  }

  try {
    Json settings = config.empty() ? Json{{"synth", Json::object()}, {"model", Json::object()},
                                          {"fit", Json::object()}}
                                   : cmd::LoadExperimentConfig(config);
    if (*simulate) {
      if (sim_seed) settings["synth"]["seed"] = *sim_seed;
      settings.erase("model");
      settings.erase("fit");
      return cmd::RunSimulate(settings, out);
    }
    if (*fit) {
      settings.erase("synth");
      Json& m = settings["model"];
      m["n_sources"] = sources;
      m["n_features_rff"] = features;
      if (sigma) m["sigma"] = *sigma;
      if (lambda) m["lambda"] = *lambda;
      if (mc) m["n_mc"] = *mc;
      if (learn_sigma) settings["fit"]["learn_sigma"] = true;
      fit_ov.Apply(settings["fit"]);
      settings["data"] = std::filesystem::absolute(data).lexically_normal().string();
      settings["use_times"] = use_times;
      settings["progress_every"] = progress;
      return cmd::RunFit(settings, out);
    }
    if (*select) {
      select_ov.Apply(settings["fit"]);
      settings["folds"] = folds;
      settings["sources_min"] = smin;
      settings["sources_max"] = smax;
      return cmd::RunSelect(settings, out);
    }
    if (*compare) {
      compare_ov.Apply(settings["fit"]);
      return cmd::RunCompareIca(settings, out);
    }
    if (*gradcheck) {
      return cmd::RunGradcheck(Json{{"instance", instance}, {"seed", gc_seed}}, out);
    }
    if (*replay) return cmd::RunReplay(manifest, out);
  } catch (const cmd::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return cmd::kExitUsage;
  } catch (const stsep::Error& e) {
    std::cerr << "error [" << stsep::ToString(e.code()) << "]: " << e.what() << "\n";
    return cmd::kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cmd::kExitRuntime;
  }
  return cmd::kExitOk;
}
