#include "stsep/elbo.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "stsep/error.hpp"
#include "stsep/parallel.hpp"
#include "stsep/spatial.hpp"
#include "stsep/temporal.hpp"

namespace stsep {

double LogLikelihood(const DataMatrix& data, const Matrix& s_at_subjects, const Matrix& a,
                     double sigma, int threads) {
  const Matrix& y = data.values;
  if (s_at_subjects.cols() != y.rows() || a.cols() != y.cols() ||
      s_at_subjects.rows() != a.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "LogLikelihood: sources, maps and data disagree");
  }
  if (!(sigma > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");

  std::array<double, kReductionChunks> partial{};
  ForEachChunk(y.rows(), threads, [&](int c, ChunkRange range) {
    const Index rows = range.end - range.begin;
    if (rows == 0) return;
    const Matrix resid = y.middleRows(range.begin, rows) -
                         s_at_subjects.middleCols(range.begin, rows).transpose() * a;
    partial[c] = resid.squaredNorm();
  });
  double rss = 0.0;
  for (double v : partial) rss += v;

  const double n = static_cast<double>(y.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma) -
         rss / (2.0 * sigma * sigma);
}

ElboBreakdown Elbo(const ModelState& state, const DataMatrix& data, const Hyperparams& hp,
                   const std::vector<NoiseDraws>& draws, int threads) {
  if (draws.empty() || static_cast<int>(draws.size()) != hp.n_mc) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected " + std::to_string(hp.n_mc) + " noise draws, got " +
                    std::to_string(draws.size()));
  }
  const TemporalPosterior& tp = state.temporal;
  const KernelFactor kf =
      BuildKernel(state.spatial.grid, state.spatial.alpha(), state.spatial.beta(), hp.jitter);
  const Vector times = state.shifts.Squashed();
  const double sigma = state.sigma();

  ElboBreakdown out;
  for (const NoiseDraws& d : draws) {
    const Matrix omega = ReparamOmega(tp, d.zeta);
    const Matrix w = ReparamWeights(tp, d.epsilon);
    const SourceEval ev = EvalSources(omega, w, tp.phases, times, hp.control_points);
    const Matrix a = SampleMaps(state.spatial, kf, d.kappa);
    out.loglik += LogLikelihood(data, ev.s, a, sigma, threads);
    out.constraint += MonotonicityLogProb(ev.s_prime, hp.lambda);
  }
  const double inv = 1.0 / static_cast<double>(draws.size());
  out.loglik *= inv;
  out.constraint *= inv;
  out.kl_spatial = KlSpatial(state.spatial, kf);
  out.kl_omega = KlOmega(tp);
  out.kl_weights = KlWeights(tp);
  return out;
}

std::vector<NoiseDraws> SampleDraws(const ModelState& state, int count, Rng& rng) {
  std::vector<NoiseDraws> draws;
  draws.reserve(count);
  for (int i = 0; i < count; ++i) {
    draws.push_back(NoiseDraws::Sample(state.sources(), state.temporal.features(),
                                       state.spatial.mu.cols(), rng));
  }
  return draws;
}

}  // namespace stsep
