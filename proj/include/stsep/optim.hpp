#pragma once

// ELBO maximisation: analytic reparameterization gradients, a central
// finite-difference oracle over the same flattened parameter vector, and an
// Adam ascent loop.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stsep/model.hpp"

namespace stsep {

/// d ELBO / d(unconstrained parameter), laid out like ModelState.
struct ModelGradient {
  Matrix mu;
  double log_alpha = 0.0;
  double log_beta = 0.0;
  Matrix r;
  Matrix log_p;
  Matrix m;
  Matrix log_s;
  Vector log_l;
  Vector t;
  double log_sigma = 0.0;
};

struct ElboGradient {
  ElboBreakdown value;
  ModelGradient grad;
};

/// Value and gradient of the ELBO with the given draws. Matches Elbo() on the
/// same draws.
ElboGradient GradElbo(const ModelState& state, const DataMatrix& data, const Hyperparams& hp,
                      const std::vector<NoiseDraws>& draws, int threads = 1);

/// Named contiguous range inside the flattened parameter vector.
struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

/// Flattening order: mu, log_alpha, log_beta, r, log_p, m, log_s, log_l, t,
/// log_sigma.
std::vector<ParamBlock> ParamLayout(const ModelState& state);
Vector PackParams(const ModelState& state);
void UnpackParams(const Vector& x, ModelState& state);
Vector PackGradient(const ModelGradient& g);

/// Central differences of Elbo() in every unconstrained coordinate, holding
/// the draws fixed.
ModelGradient FiniteDifferenceGradient(const ModelState& state, const DataMatrix& data,
                                       const Hyperparams& hp,
                                       const std::vector<NoiseDraws>& draws, double h = 1e-5);

struct GradCheckBlock {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Index worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_error = 0.0;  // over coordinates with magnitude above the floor
  bool passed = false;
};

/// Coordinate i passes if |g - fd| <= abs_floor or |g - fd| / max(|g|, |fd|) < rel_tol.
GradCheckReport CompareGradients(const ModelState& state, const ModelGradient& analytic,
                                 const ModelGradient& numeric, double rel_tol = 1e-5,
                                 double abs_floor = 1e-8);

/// Small randomised problem for gradient checks: "tiny" is P=6, 2x2 grid,
/// Ns=1, J=2; "small" is P=6, 3x3 grid, Ns=2, J=3. Parameters are drawn
/// away from their initial values so no gradient block vanishes.
struct CheckInstance {
  DataMatrix data;
  Hyperparams hp;
  ModelState state;
  std::vector<NoiseDraws> draws;
};

CheckInstance MakeCheckInstance(const std::string& name, std::uint64_t seed = 0);

struct FitConfig {
  int max_iters = 20000;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int window = 200;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  bool learn_sigma = false;
  bool learn_times = true;
  int report_mc = 64;  // draws for the final reported ELBO
  int threads = 1;

  void Validate() const;
};

struct FitProgress {
  int iteration = 0;
  ElboBreakdown elbo;
};

struct FitTrace {
  std::vector<ElboBreakdown> elbo;  // one per iteration, before that iteration's update
  ElboBreakdown final_elbo;         // report_mc-sample estimate at the final state
  ModelState final_state;
  double wall_seconds = 0.0;
  bool converged = false;
  long degeneracy_count = 0;        // p or s values floored at kStdFloor
};

constexpr double kStdFloor = 1e-6;

using ProgressFn = std::function<void(const FitProgress&)>;

/// Adam ascent from InitModel(data, hp, cfg.seed). Throws
/// Error(kNonFiniteObjective) naming the iteration and term on divergence.
FitTrace Fit(const DataMatrix& data, const Hyperparams& hp, const FitConfig& cfg,
             const ProgressFn& progress = {}, int progress_every = 0);

/// Same loop from an explicit starting state.
FitTrace FitFrom(ModelState state, const DataMatrix& data, const Hyperparams& hp,
                 const FitConfig& cfg, const ProgressFn& progress = {}, int progress_every = 0);

}  // namespace stsep
