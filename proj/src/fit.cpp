#include <chrono>
#include <cmath>
#include <string>

#include "stsep/elbo.hpp"
#include "stsep/error.hpp"
#include "stsep/optim.hpp"

namespace stsep {

namespace {

// Draw streams are decorrelated from the initialisation stream.
constexpr std::uint64_t kTrainStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kReportStream = 0xc2b2ae3d27d4eb4fULL;

void CheckFinite(const ElboBreakdown& e, int iter) {
  const std::pair<const char*, double> terms[] = {
      {"loglik", e.loglik},         {"constraint", e.constraint}, {"kl_spatial", e.kl_spatial},
      {"kl_omega", e.kl_omega},     {"kl_weights", e.kl_weights},
  };
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteObjective,
                  "non-finite ELBO at iteration " + std::to_string(iter) + " (term " + name + ")");
    }
  }
}

double WindowMean(const std::vector<ElboBreakdown>& trace, size_t begin, size_t end) {
  double acc = 0.0;
  for (size_t i = begin; i < end; ++i) acc += trace[i].total();
  return acc / static_cast<double>(end - begin);
}

long FloorStd(Matrix& log_std) {
  const double floor = std::log(kStdFloor);
  long count = 0;
  for (Index i = 0; i < log_std.size(); ++i) {
    if (log_std.data()[i] < floor) {
      log_std.data()[i] = floor;
      ++count;
    }
  }
  return count;
}

}  // namespace

void FitConfig::Validate() const {
  if (max_iters < 1) throw Error(ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  if (!(learning_rate >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "learning_rate must be >= 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "moment decay rates must lie in (0, 1)");
  }
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "window must be >= 1");
  if (report_mc < 1) throw Error(ErrorCode::kInvalidArgument, "report_mc must be >= 1");
}

FitTrace Fit(const DataMatrix& data, const Hyperparams& hp, const FitConfig& cfg,
             const ProgressFn& progress, int progress_every) {
  return FitFrom(InitModel(data, hp, cfg.seed), data, hp, cfg, progress, progress_every);
}

FitTrace FitFrom(ModelState state, const DataMatrix& data, const Hyperparams& hp,
                 const FitConfig& cfg, const ProgressFn& progress, int progress_every) {
  cfg.Validate();
  hp.Validate();
  data.Validate();
  const auto start = std::chrono::steady_clock::now();

  const auto layout = ParamLayout(state);
  Vector x = PackParams(state);
  Vector mask = Vector::Ones(x.size());
  for (const ParamBlock& blk : layout) {
    if ((blk.name == "t" && !cfg.learn_times) || (blk.name == "log_sigma" && !cfg.learn_sigma)) {
      mask.segment(blk.offset, blk.size).setZero();
    }
  }
  Vector m1 = Vector::Zero(x.size());
  Vector m2 = Vector::Zero(x.size());

  Rng draw_rng(cfg.seed ^ kTrainStream);
  FitTrace trace;
  trace.elbo.reserve(static_cast<size_t>(cfg.max_iters));
  const size_t window = static_cast<size_t>(cfg.window);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const auto draws = SampleDraws(state, hp.n_mc, draw_rng);
    const ElboGradient eg = GradElbo(state, data, hp, draws, cfg.threads);
    CheckFinite(eg.value, iter);
    trace.elbo.push_back(eg.value);
    if (progress && progress_every > 0 && iter % progress_every == 0) progress({iter, eg.value});

    const Vector g = PackGradient(eg.grad).cwiseProduct(mask);
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * g;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, iter + 1);
    const double c2 = 1.0 - std::pow(cfg.beta2, iter + 1);
    const Vector step =
        ((m1 / c1).array() / ((m2 / c2).array().sqrt() + cfg.adam_eps)).matrix();
    x += cfg.learning_rate * step.cwiseProduct(mask);
    UnpackParams(x, state);

    const long floored = FloorStd(state.temporal.log_p) + FloorStd(state.temporal.log_s);
    if (floored > 0) {
      trace.degeneracy_count += floored;
      x = PackParams(state);
    }

    const size_t n = trace.elbo.size();
    if (n >= 2 * window) {
      const double prev = WindowMean(trace.elbo, n - 2 * window, n - window);
      const double last = WindowMean(trace.elbo, n - window, n);
      if (std::abs(last - prev) / std::max(std::abs(prev), 1e-300) < cfg.tolerance) {
        trace.converged = true;
        break;
      }
    }
  }

  Hyperparams report_hp = hp;
  report_hp.n_mc = cfg.report_mc;
  Rng report_rng(cfg.seed ^ kReportStream);
  const auto report_draws = SampleDraws(state, cfg.report_mc, report_rng);
  trace.final_elbo = Elbo(state, data, report_hp, report_draws, cfg.threads);
  trace.final_state = std::move(state);
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace stsep
