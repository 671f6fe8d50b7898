#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "stsep/eval.hpp"
#include "stsep/optim.hpp"
#include "stsep/synth.hpp"

namespace stsep::cli {

namespace {

constexpr const char* kManifestName = "manifest.json";

// Validation errors raised while interpreting settings are the caller's
// fault, not the run's.
template <typename F>
auto Settle(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidArgument) throw UsageError(e.what());
    throw;
  } catch (const Json::exception& e) {
    throw UsageError(std::string("settings: ") + e.what());
  }
}

Hyperparams ModelSettings(const Json& s) {
  return Settle([&] {
    Hyperparams hp = HyperparamsFromJson(s.value("model", Json::object()));
    hp.Validate();
    return hp;
  });
}

FitConfig FitSettings(const Json& s) {
  return Settle([&] {
    FitConfig cfg = FitConfigFromJson(s.value("fit", Json::object()));
    cfg.Validate();
    return cfg;
  });
}

SynthConfig SynthSettings(const Json& s) {
  return Settle([&] { return SynthConfigFromJson(s.value("synth", Json::object())); });
}

void PrepareOut(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out.string() + ": " + ec.message());
}

// Written last, so a manifest only exists for runs that finished.
void WriteManifest(const fs::path& out, const std::string& command, const Json& settings,
                   const std::vector<std::string>& outputs, const Json& inputs = Json::object()) {
  Json digests = Json::object();
  for (const std::string& name : outputs) digests[name] = FileDigest(out / name);
  Json m{{"tool", "stsep"},       {"version", kVersion}, {"command", command},
         {"settings", settings},  {"inputs", inputs},    {"outputs", digests}};
  SaveJson(m, out / kManifestName);
}

Json ToJson(const ElboBreakdown& e) {
  return Json{{"loglik", e.loglik},         {"constraint", e.constraint},
              {"kl_spatial", e.kl_spatial}, {"kl_omega", e.kl_omega},
              {"kl_weights", e.kl_weights}, {"total", e.total()}};
}

std::string Join(const std::vector<double>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += FormatDouble(v[i]);
  }
  return s;
}

double Mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

Json LoadExperimentConfig(const fs::path& path) {
  const Json raw = LoadJson(path);
  if (!raw.is_object()) throw UsageError(path.string() + ": expected a JSON object");
  const bool sectioned = raw.contains("synth") || raw.contains("model") || raw.contains("fit");
  Json out = Json::object();
  out["synth"] = sectioned ? raw.value("synth", Json::object()) : raw;
  out["model"] = sectioned ? raw.value("model", Json::object()) : Json::object();
  out["fit"] = sectioned ? raw.value("fit", Json::object()) : Json::object();
  return out;
}

int RunSimulate(const Json& settings, const fs::path& out) {
  const SynthConfig cfg = SynthSettings(settings);
  PrepareOut(out);
  const auto [data, truth] = Generate(cfg);
  WriteMatrix(data, out / "data.bin");
  SaveJson(ToJson(truth), out / "ground_truth.json");
  // The resolved config (defaults filled in) is what gets recorded.
  Json recorded = settings;
  recorded["synth"] = ToJson(cfg);
  WriteManifest(out, "simulate", recorded, {"data.bin", "ground_truth.json"});
  std::cerr << "simulate: " << data.values.rows() << " x " << data.values.cols()
            << " images, noise std " << truth.noise_std << "\n";
  return kExitOk;
}

int RunFit(const Json& settings, const fs::path& out) {
  Hyperparams hp = ModelSettings(settings);
  FitConfig cfg = FitSettings(settings);
  const fs::path data_path = Settle([&] { return fs::path(settings.at("data").get<std::string>()); });
  const bool use_times = settings.value("use_times", false);
  const int progress_every = settings.value("progress_every", 0);

  DataMatrix data = ReadMatrix(data_path);
  if (use_times) {
    if (!data.observed_times) {
      throw UsageError("--times given but " + data_path.string() + " carries no times");
    }
    cfg.learn_times = false;
  } else {
    data.observed_times.reset();
  }
  PrepareOut(out);

  ProgressFn progress;
  if (progress_every > 0) {
    progress = [](const FitProgress& p) {
      std::cerr << "iter " << p.iteration << "  elbo " << p.elbo.total() << "  loglik "
                << p.elbo.loglik << "\n";
    };
  }
  const FitTrace tr = Fit(data, hp, cfg, progress, progress_every);
  const ModelState& st = tr.final_state;

  SaveCheckpoint(Checkpoint{st, hp, cfg.seed}, out / "checkpoint.json");
  WriteTraceCsv(tr.elbo, out / "trace.csv");

  DataMatrix maps;
  maps.values = st.spatial.mu;
  maps.grid = data.grid;
  WriteMatrix(maps, out / "maps.bin");

  const Index ns = st.temporal.sources();
  const Vector grid = Vector::LinSpaced(100, 0.0, 1.0);
  const Matrix s = FittedSources(st, grid);
  const Matrix ds = FittedSourceDerivatives(st, grid);
  std::vector<std::string> header{"tau"};
  for (Index n = 0; n < ns; ++n) header.push_back("s" + std::to_string(n + 1));
  for (Index n = 0; n < ns; ++n) header.push_back("ds" + std::to_string(n + 1));
  std::vector<std::vector<std::string>> rows;
  for (Index k = 0; k < grid.size(); ++k) {
    std::vector<std::string> row{FormatDouble(grid(k))};
    for (Index n = 0; n < ns; ++n) row.push_back(FormatDouble(s(n, k)));
    for (Index n = 0; n < ns; ++n) row.push_back(FormatDouble(ds(n, k)));
    rows.push_back(std::move(row));
  }
  WriteCsv(out / "sources.csv", header, rows);

  const Vector tau = st.shifts.Squashed();
  rows.clear();
  for (Index p = 0; p < tau.size(); ++p) {
    rows.push_back({std::to_string(p), FormatDouble(st.shifts.t(p)), FormatDouble(tau(p))});
  }
  WriteCsv(out / "times.csv", {"subject", "shift", "tau"}, rows);

  const std::vector<double> mono = MonotoneFraction(st);
  Json summary{{"final_elbo", ToJson(tr.final_elbo)},
               {"iterations", tr.elbo.size()},
               {"converged", tr.converged},
               {"degeneracy_count", tr.degeneracy_count},
               {"sigma", st.sigma()},
               {"alpha", st.spatial.alpha()},
               {"beta", st.spatial.beta()},
               {"monotone_fraction", mono}};
  SaveJson(summary, out / "summary.json");

  WriteManifest(out, "fit", settings,
                {"checkpoint.json", "trace.csv", "maps.bin", "sources.csv", "times.csv", "summary.json"},
                Json{{"data", FileDigest(data_path)}});
  std::cerr << "fit: " << tr.elbo.size() << " iterations in " << tr.wall_seconds << " s, elbo "
            << tr.final_elbo.total() << (tr.converged ? "" : " (not converged)") << "\n";
  return kExitOk;
}

int RunSelect(const Json& settings, const fs::path& out) {
  const SynthConfig synth = SynthSettings(settings);
  const Hyperparams hp = ModelSettings(settings);
  const FitConfig fit = FitSettings(settings);
  const int folds = settings.value("folds", 10);
  const int lo = settings.value("sources_min", 1);
  const int hi = settings.value("sources_max", 4);
  if (folds < 1 || lo < 1 || hi < lo) throw UsageError("need folds >= 1 and 1 <= sources-min <= sources-max");
  std::vector<int> range(static_cast<std::size_t>(hi - lo + 1));
  std::iota(range.begin(), range.end(), lo);
  PrepareOut(out);

  const std::vector<SweepRow> sweep = ModelSelectionSweep(synth, hp, fit, folds, range);

  std::vector<std::vector<std::string>> rows;
  std::map<int, std::vector<double>> elbos, ratios;
  for (const SweepRow& r : sweep) {
    rows.push_back({std::to_string(r.fold), std::to_string(r.n_sources), r.ok ? "1" : "0",
                    FormatDouble(r.elbo.loglik), FormatDouble(r.elbo.constraint),
                    FormatDouble(r.elbo.kl_spatial), FormatDouble(r.elbo.kl_omega),
                    FormatDouble(r.elbo.kl_weights), FormatDouble(r.elbo.total()),
                    r.ok ? FormatDouble(r.weakest_ratio()) : "", Join(r.map_norms, ';'),
                    std::to_string(r.iterations), r.error});
    if (r.ok) {
      elbos[r.n_sources].push_back(r.elbo.total());
      ratios[r.n_sources].push_back(r.weakest_ratio());
    }
  }
  WriteCsv(out / "sweep.csv",
           {"fold", "n_sources", "ok", "loglik", "constraint", "kl_spatial", "kl_omega",
            "kl_weights", "total", "weakest_ratio", "map_norms", "iterations", "error"},
           rows);

  Json per = Json::array();
  for (int ns : range) {
    const auto& e = elbos[ns];
    const auto& q = ratios[ns];
    double var = 0.0;
    const double mean = Mean(e);
    for (double v : e) var += (v - mean) * (v - mean);
    const long small = std::count_if(q.begin(), q.end(), [](double x) { return x <= 0.1; });
    per.push_back(Json{{"n_sources", ns},
                       {"completed", e.size()},
                       {"elbo_mean", mean},
                       {"elbo_std", e.size() > 1 ? std::sqrt(var / static_cast<double>(e.size() - 1)) : 0.0},
                       {"folds_weakest_le_0.1", small}});
  }
  SaveJson(Json{{"folds", folds}, {"per_sources", per}}, out / "summary.json");

  Json recorded = settings;
  recorded["synth"] = ToJson(synth);
  WriteManifest(out, "select", recorded, {"sweep.csv", "summary.json"});
  return kExitOk;
}

int RunCompareIca(const Json& settings, const fs::path& out) {
  SynthConfig synth = SynthSettings(settings);
  synth.hide_times = false;
  const Hyperparams hp = ModelSettings(settings);
  const FitConfig fit = FitSettings(settings);
  if (hp.n_sources != synth.n_sources) {
    throw UsageError("model.n_sources must equal synth.n_sources for the comparison");
  }
  PrepareOut(out);

  const auto [data, truth] = Generate(synth);
  const IcaComparison c = CompareWithIca(data, truth, hp, fit);

  std::vector<std::vector<std::string>> rows;
  auto emit = [&](const char* method, const std::vector<double>& maps, const std::vector<double>& courses) {
    for (std::size_t i = 0; i < maps.size(); ++i) {
      rows.push_back({method, std::to_string(i + 1), FormatDouble(maps[i]), FormatDouble(courses[i])});
    }
  };
  emit("model", c.model_maps, c.model_temporal);
  emit("ica", c.ica_maps, c.ica_temporal);
  WriteCsv(out / "comparison.csv", {"method", "source", "map_corr", "temporal_corr"}, rows);
  SaveJson(Json{{"model_mean", c.model_mean},
                {"ica_mean", c.ica_mean},
                {"model_ge_ica", c.model_mean >= c.ica_mean},
                {"ica_converged", c.ica_converged}},
           out / "summary.json");

  Json recorded = settings;
  recorded["synth"] = ToJson(synth);
  WriteManifest(out, "compare-ica", recorded, {"comparison.csv", "summary.json"});
  std::cerr << "compare-ica: model " << c.model_mean << "  ica " << c.ica_mean << "\n";
  return kExitOk;
}

int RunGradcheck(const Json& settings, const fs::path& out) {
  const std::string instance = settings.value("instance", std::string("tiny"));
  const std::uint64_t seed = settings.value("seed", std::uint64_t{0});
  const double rel_tol = settings.value("rel_tol", 1e-5);
  const double step = settings.value("step", 1e-5);
  CheckInstance ci = Settle([&] { return MakeCheckInstance(instance, seed); });
  PrepareOut(out);

  const ElboGradient g = GradElbo(ci.state, ci.data, ci.hp, ci.draws);
  const ModelGradient fd = FiniteDifferenceGradient(ci.state, ci.data, ci.hp, ci.draws, step);
  const GradCheckReport rep = CompareGradients(ci.state, g.grad, fd, rel_tol);

  std::vector<std::vector<std::string>> rows;
  for (const GradCheckBlock& b : rep.blocks) {
    rows.push_back({b.name, FormatDouble(b.max_rel_error), FormatDouble(b.max_abs_error),
                    std::to_string(b.worst_index)});
  }
  WriteCsv(out / "gradcheck.csv", {"block", "max_rel_error", "max_abs_error", "worst_index"}, rows);
  SaveJson(Json{{"instance", instance},
                {"max_rel_error", rep.max_rel_error},
                {"rel_tol", rel_tol},
                {"passed", rep.passed}},
           out / "summary.json");
  WriteManifest(out, "gradcheck", settings, {"gradcheck.csv", "summary.json"});

  std::cout << "gradcheck " << instance << ": max relative error " << rep.max_rel_error
            << (rep.passed ? " (pass)" : " (FAIL)") << "\n";
  return rep.passed ? kExitOk : kExitCheckFailed;
}

int RunReplay(const fs::path& manifest_path, const fs::path& out) {
  const Json m = LoadJson(manifest_path);
  const std::string command = Settle([&] { return m.at("command").get<std::string>(); });
  const Json& settings = m.at("settings");
  if (m.value("version", std::string()) != kVersion) {
    std::cerr << "warning: manifest written by version " << m.value("version", std::string("?"))
              << ", replaying with " << kVersion << "\n";
  }
  if (command == "fit") {
    const fs::path data = settings.at("data").get<std::string>();
    const std::string want = m.at("inputs").at("data").get<std::string>();
    if (FileDigest(data) != want) {
      throw Error(ErrorCode::kIo, "input " + data.string() + " changed since the recorded run");
    }
  }

  int code = kExitOk;
  if (command == "simulate") code = RunSimulate(settings, out);
  else if (command == "fit") code = RunFit(settings, out);
  else if (command == "select") code = RunSelect(settings, out);
  else if (command == "compare-ica") code = RunCompareIca(settings, out);
  else if (command == "gradcheck") code = RunGradcheck(settings, out);
  else throw UsageError("unknown command in manifest: " + command);
  if (code != kExitOk) return code;

  int mismatches = 0;
  for (const auto& [name, digest] : m.at("outputs").items()) {
    const std::string got = FileDigest(out / name);
    if (got != digest.get<std::string>()) {
      std::cerr << "replay: " << name << " differs (" << got << " vs " << digest.get<std::string>() << ")\n";
      ++mismatches;
    }
  }
  std::cout << "replay " << command << ": " << m.at("outputs").size() - mismatches << "/"
            << m.at("outputs").size() << " outputs identical\n";
  return mismatches == 0 ? kExitOk : kExitCheckFailed;
}

}  // namespace stsep::cli
