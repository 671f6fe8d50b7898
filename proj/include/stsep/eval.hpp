#pragma once

// Scoring against ground truth and the experiment harnesses built on it.

#include <optional>
#include <string>
#include <vector>

#include "stsep/model.hpp"
#include "stsep/optim.hpp"
#include "stsep/synth.hpp"

namespace stsep {

/// Pearson correlation; nullopt when either input has zero variance.
std::optional<double> Pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

struct SourceMatch {
  std::vector<int> permutation;      // truth row i <- estimated row permutation[i]
  std::vector<int> signs;            // +1 / -1 applied to the estimated row
  std::vector<double> correlations;  // absolute correlation per truth row
  bool degenerate = false;           // some row was constant; its correlation is 0
  double total() const;
};

/// Assignment of estimated rows to truth rows maximising total absolute
/// Pearson correlation, by exhaustive search (estimated rows <= 8). The
/// estimate may carry more rows than the truth.
SourceMatch MatchSources(const Matrix& estimated, const Matrix& truth);

/// Estimated rows reordered and sign-flipped onto the truth ordering.
Matrix ApplyMatch(const Matrix& estimated, const SourceMatch& match);

/// Pearson correlation of squashed estimated shifts with true times. Throws
/// on zero-variance input.
double TimeshiftCorrelation(const TimeShifts& estimated, const Vector& truth);

/// Posterior-mean plug-in sources (Omega = r, W = m) at arbitrary times.
Matrix FittedSources(const ModelState& state, const Vector& times);
Matrix FittedSourceDerivatives(const ModelState& state, const Vector& times);

/// Fraction of `n_probe` uniform points in [0, 1] where S'_n >= threshold,
/// per source.
std::vector<double> MonotoneFraction(const ModelState& state, int n_probe = 256,
                                     double threshold = -1e-3);

struct RecoveryMetrics {
  SourceMatch maps;                     // matched on posterior mean maps
  std::vector<double> temporal;         // |corr| on the resampled axes, truth order
  double time_correlation = 0.0;        // signed Pearson of estimated vs true times
  std::vector<double> monotone_fraction;
  double min_map() const;
  double min_temporal() const;
};

/// Matches maps, then compares temporal sources after resampling each onto
/// `n_resample` uniform points spanning its own subjects' time range.
RecoveryMetrics EvaluateRecovery(const ModelState& state, const GroundTruth& truth,
                                 int n_resample = 100);

struct SweepRow {
  int fold = 0;
  int n_sources = 0;
  bool ok = false;
  std::string error;
  ElboBreakdown elbo;            // reported ELBO at the final state
  std::vector<double> map_norms; // L2 norm of each posterior mean map, descending
  int iterations = 0;
  double weakest_ratio() const;  // min norm / max norm
};

/// Fits every (fold, Ns) cell: fold f uses data seed base.seed + f and fit
/// seed fit.seed + 1000 f + Ns, so cells are independent of execution order.
/// Failed cells are recorded, not rethrown.
std::vector<SweepRow> ModelSelectionSweep(const SynthConfig& base, const Hyperparams& hp,
                                          const FitConfig& fit, int n_folds,
                                          const std::vector<int>& sources_range);

struct IcaComparison {
  std::vector<double> model_maps, model_temporal;
  std::vector<double> ica_maps, ica_temporal;
  double model_mean = 0.0;
  double ica_mean = 0.0;
  bool ica_converged = false;
};

/// Known-times comparison: the model is fitted with fixed shifts and FastICA
/// runs on the same images; both are matched on their maps and scored on maps
/// and on courses at the subjects' times.
IcaComparison CompareWithIca(const DataMatrix& data, const GroundTruth& truth,
                             const Hyperparams& hp, const FitConfig& fit,
                             FitTrace* model_trace = nullptr);

}  // namespace stsep
