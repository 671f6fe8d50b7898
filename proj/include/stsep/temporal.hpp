#pragma once

// Temporal sources as random cosine-feature expansions of a GP:
//
//   S_n(t)  =  sqrt(2/J) sum_j W[n,j] cos(Omega[n,j] t + b_j)
//   S'_n(t) = -sqrt(2/J) sum_j W[n,j] Omega[n,j] sin(Omega[n,j] t + b_j)
//
// plus the monotonicity constraint likelihood and the closed-form KLs of
// q(Omega) and q(W) against their priors N(0, 1/l_n) and N(0, 1).

#include "stsep/model.hpp"

namespace stsep {

struct SourceEval {
  Matrix s;        // Ns x T values at the query times
  Matrix s_prime;  // Ns x C derivatives at the control points
  Index n_extrapolated = 0;  // query times outside [0, 1]
};

/// Omega = r + p * zeta, elementwise.
Matrix ReparamOmega(const TemporalPosterior& tp, const Matrix& zeta);
/// W = m + s * epsilon, elementwise.
Matrix ReparamWeights(const TemporalPosterior& tp, const Matrix& epsilon);

/// Source values at `times` and analytic derivatives at `control_points`.
/// Times outside [0, 1] are evaluated anyway and counted in n_extrapolated.
SourceEval EvalSources(const Matrix& omega, const Matrix& w, const Vector& phases,
                       const Vector& times, const Vector& control_points);

/// Ns x T matrix of S_n(t).
Matrix SourceValues(const Matrix& omega, const Matrix& w, const Vector& phases,
                    const Vector& times);
/// Ns x T matrix of S'_n(t).
Matrix SourceDerivatives(const Matrix& omega, const Matrix& w, const Vector& phases,
                         const Vector& times);

/// log(1 / (1 + exp(-x))) without overflow.
double LogSigmoid(double x);

/// sum_n sum_c log sigmoid(lambda * S'_n(u_c)); always <= 0.
double MonotonicityLogProb(const Matrix& s_prime, double lambda);

double KlOmega(const TemporalPosterior& tp);
double KlWeights(const TemporalPosterior& tp);

}  // namespace stsep
