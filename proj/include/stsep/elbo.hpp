#pragma once

// Stochastic evidence lower bound: Monte Carlo averages of the data
// log-likelihood and the monotonicity constraint under reparameterized
// draws, minus the three closed-form KL divergences.

#include <vector>

#include "stsep/model.hpp"

namespace stsep {

/// sum_{p,v} log N(Y[p,v] | sum_n S[n,p] A[n,v], sigma^2).
double LogLikelihood(const DataMatrix& data, const Matrix& s_at_subjects, const Matrix& a,
                     double sigma, int threads = 1);

/// `draws.size()` must equal hp.n_mc. Deterministic given the draws.
ElboBreakdown Elbo(const ModelState& state, const DataMatrix& data, const Hyperparams& hp,
                   const std::vector<NoiseDraws>& draws, int threads = 1);

/// `count` independent draw sets shaped for `state`.
std::vector<NoiseDraws> SampleDraws(const ModelState& state, int count, Rng& rng);

}  // namespace stsep
