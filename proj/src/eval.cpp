#include "stsep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stsep/error.hpp"
#include "stsep/ica.hpp"
#include "stsep/temporal.hpp"

namespace stsep {

std::optional<double> Pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw Error(ErrorCode::kShapeMismatch, "Pearson: inputs must have equal length >= 2");
  }
  const Vector ca = a.array() - a.mean();
  const Vector cb = b.array() - b.mean();
  const double na = ca.norm();
  const double nb = cb.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return std::nullopt;
  return ca.dot(cb) / (na * nb);
}

double SourceMatch::total() const {
  return std::accumulate(correlations.begin(), correlations.end(), 0.0);
}

SourceMatch MatchSources(const Matrix& estimated, const Matrix& truth) {
  if (estimated.cols() != truth.cols() || estimated.rows() < truth.rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "MatchSources: estimate needs at least as many rows as truth, same columns");
  }
  if (estimated.rows() > 8) {
    throw Error(ErrorCode::kInvalidArgument, "MatchSources: at most 8 estimated rows");
  }
  const Index ne = estimated.rows();
  const Index nt = truth.rows();
  Matrix corr(nt, ne);
  bool degenerate = false;
  for (Index i = 0; i < nt; ++i) {
    for (Index k = 0; k < ne; ++k) {
      const auto c = Pearson(truth.row(i).transpose(), estimated.row(k).transpose());
      if (!c) degenerate = true;
      corr(i, k) = c.value_or(0.0);
    }
  }

  std::vector<int> order(static_cast<size_t>(ne));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> best;
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (Index i = 0; i < nt; ++i) score += std::abs(corr(i, order[static_cast<size_t>(i)]));
    // Strict improvement keeps the lexicographically first optimum.
    if (score > best_score + 1e-15) {
      best_score = score;
      best.assign(order.begin(), order.begin() + nt);
    }
  } while (std::next_permutation(order.begin(), order.end()));

  SourceMatch m;
  m.permutation = best;
  m.degenerate = degenerate;
  for (Index i = 0; i < nt; ++i) {
    const double c = corr(i, best[static_cast<size_t>(i)]);
    m.signs.push_back(c < 0.0 ? -1 : 1);
    m.correlations.push_back(std::abs(c));
  }
  return m;
}

Matrix ApplyMatch(const Matrix& estimated, const SourceMatch& match) {
  Matrix out(static_cast<Index>(match.permutation.size()), estimated.cols());
  for (size_t i = 0; i < match.permutation.size(); ++i) {
    out.row(static_cast<Index>(i)) = match.signs[i] * estimated.row(match.permutation[i]);
  }
  return out;
}

double TimeshiftCorrelation(const TimeShifts& estimated, const Vector& truth) {
  if (estimated.t.size() != truth.size()) {
    throw Error(ErrorCode::kShapeMismatch, "TimeshiftCorrelation: length mismatch");
  }
  const auto c = Pearson(estimated.Squashed(), truth);
  if (!c) throw Error(ErrorCode::kInvalidArgument, "TimeshiftCorrelation: zero-variance input");
  return *c;
}

Matrix FittedSources(const ModelState& state, const Vector& times) {
  return SourceValues(state.temporal.r, state.temporal.m, state.temporal.phases, times);
}

Matrix FittedSourceDerivatives(const ModelState& state, const Vector& times) {
  return SourceDerivatives(state.temporal.r, state.temporal.m, state.temporal.phases, times);
}

std::vector<double> MonotoneFraction(const ModelState& state, int n_probe, double threshold) {
  const Matrix ds = FittedSourceDerivatives(state, Vector::LinSpaced(n_probe, 0.0, 1.0));
  std::vector<double> out;
  for (Index n = 0; n < ds.rows(); ++n) {
    out.push_back(static_cast<double>((ds.row(n).array() >= threshold).count()) / n_probe);
  }
  return out;
}

double RecoveryMetrics::min_map() const {
  return *std::min_element(maps.correlations.begin(), maps.correlations.end());
}

double RecoveryMetrics::min_temporal() const {
  return *std::min_element(temporal.begin(), temporal.end());
}

RecoveryMetrics EvaluateRecovery(const ModelState& state, const GroundTruth& truth,
                                 int n_resample) {
  RecoveryMetrics rm;
  rm.maps = MatchSources(state.spatial.mu, truth.maps);

  const Vector tau = state.shifts.Squashed();
  const Vector est_axis = Vector::LinSpaced(n_resample, tau.minCoeff(), tau.maxCoeff());
  const Vector true_axis =
      Vector::LinSpaced(n_resample, truth.times.minCoeff(), truth.times.maxCoeff());
  const Matrix est = FittedSources(state, est_axis);
  const Matrix ref = SigmoidSources(truth.alphas, true_axis);
  for (Index i = 0; i < ref.rows(); ++i) {
    const int k = rm.maps.permutation[static_cast<size_t>(i)];
    const auto c = Pearson(est.row(k).transpose(), ref.row(i).transpose());
    rm.temporal.push_back(c ? std::abs(*c) : 0.0);
  }
  const auto tc = Pearson(tau, truth.times);
  rm.time_correlation = tc.value_or(0.0);
  rm.monotone_fraction = MonotoneFraction(state);
  return rm;
}

double SweepRow::weakest_ratio() const {
  if (map_norms.empty() || !(map_norms.front() > 0.0)) return 0.0;
  return map_norms.back() / map_norms.front();
}

std::vector<SweepRow> ModelSelectionSweep(const SynthConfig& base, const Hyperparams& hp,
                                          const FitConfig& fit, int n_folds,
                                          const std::vector<int>& sources_range) {
  if (n_folds < 1) throw Error(ErrorCode::kInvalidArgument, "n_folds must be >= 1");
  std::vector<SweepRow> rows;
  for (int fold = 0; fold < n_folds; ++fold) {
    SynthConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(fold);
    const auto [data, truth] = Generate(cfg);
    for (int ns : sources_range) {
      SweepRow row;
      row.fold = fold;
      row.n_sources = ns;
      try {
        Hyperparams cell_hp = hp;
        cell_hp.n_sources = ns;
        FitConfig cell_fit = fit;
        cell_fit.seed = fit.seed + 1000ULL * static_cast<std::uint64_t>(fold) +
                        static_cast<std::uint64_t>(ns);
        const FitTrace tr = Fit(data, cell_hp, cell_fit);
        row.elbo = tr.final_elbo;
        row.iterations = static_cast<int>(tr.elbo.size());
        for (Index n = 0; n < tr.final_state.spatial.mu.rows(); ++n) {
          row.map_norms.push_back(tr.final_state.spatial.mu.row(n).norm());
        }
        std::sort(row.map_norms.begin(), row.map_norms.end(), std::greater<>());
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

IcaComparison CompareWithIca(const DataMatrix& data, const GroundTruth& truth,
                             const Hyperparams& hp, const FitConfig& fit,
                             FitTrace* model_trace) {
  if (!data.observed_times) {
    throw Error(ErrorCode::kInvalidArgument, "ICA comparison needs observed times");
  }
  const Matrix true_courses = SigmoidSources(truth.alphas, truth.times);
  IcaComparison out;

  FitConfig known = fit;
  known.learn_times = false;
  FitTrace tr = Fit(data, hp, known);
  const ModelState& st = tr.final_state;
  const SourceMatch mm = MatchSources(st.spatial.mu, truth.maps);
  out.model_maps = mm.correlations;
  const Matrix model_courses = FittedSources(st, st.shifts.Squashed());
  for (Index i = 0; i < true_courses.rows(); ++i) {
    const auto c = Pearson(model_courses.row(mm.permutation[static_cast<size_t>(i)]).transpose(),
                           true_courses.row(i).transpose());
    out.model_temporal.push_back(c ? std::abs(*c) : 0.0);
  }

  const Whitened w = Whiten(data.values, hp.n_sources);
  const IcaResult ica = FastIca(w, 1000, 1e-8, fit.seed);
  out.ica_converged = ica.converged;
  const SourceMatch im = MatchSources(ica.maps, truth.maps);
  out.ica_maps = im.correlations;
  for (Index i = 0; i < true_courses.rows(); ++i) {
    const auto c = Pearson(ica.courses.col(im.permutation[static_cast<size_t>(i)]),
                           true_courses.row(i).transpose());
    out.ica_temporal.push_back(c ? std::abs(*c) : 0.0);
  }

  auto mean = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double s = std::accumulate(a.begin(), a.end(), 0.0) + std::accumulate(b.begin(), b.end(), 0.0);
    return s / static_cast<double>(a.size() + b.size());
  };
  out.model_mean = mean(out.model_maps, out.model_temporal);
  out.ica_mean = mean(out.ica_maps, out.ica_temporal);
  if (model_trace) *model_trace = std::move(tr);
  return out;
}

}  // namespace stsep
