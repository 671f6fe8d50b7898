#pragma once

// Core model state shared by every other module: observed data, the three
// variational posteriors, per-subject time-shifts and hyperparameters.
//
// Positive quantities (std devs, precisions, kernel scalars, noise level) are
// stored as unconstrained logs and exponentiated on read.

#include <cstdint>
#include <optional>
#include <random>

#include <Eigen/Dense>

namespace stsep {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Arrangement of the F features: an H x W lattice flattened row-major
/// (feature index i*W + j), or a flat set with no spatial neighbourhood.
struct GridGeometry {
  Index rows = 1;
  Index cols = 1;
  bool lattice = false;

  static GridGeometry Lattice(Index rows, Index cols);
  static GridGeometry Flat(Index n_features);

  Index size() const { return rows * cols; }
  bool operator==(const GridGeometry&) const = default;
};

struct DataMatrix {
  Matrix values;                          // P subjects x F features
  std::optional<Vector> observed_times;   // length P, in [0, 1]
  GridGeometry grid;

  Index subjects() const { return values.rows(); }
  Index features() const { return values.cols(); }

  /// Throws Error on non-finite entries or inconsistent shapes.
  void Validate() const;
};

/// q(Omega) = prod N(r, p^2) and q(W) = prod N(m, s^2), one row per source.
struct TemporalPosterior {
  Matrix r;       // Ns x J
  Matrix log_p;   // Ns x J
  Matrix m;       // Ns x J
  Matrix log_s;   // Ns x J
  Vector log_l;   // Ns, prior precision of the frequencies
  Vector phases;  // J, fixed random-feature phases in [0, 2pi)

  Index sources() const { return r.rows(); }
  Index features() const { return r.cols(); }

  Matrix p() const { return log_p.array().exp().matrix(); }
  Matrix s() const { return log_s.array().exp().matrix(); }
  Vector l() const { return log_l.array().exp().matrix(); }

  void Validate() const;
};

/// q(A) = prod_n N(mu_n, Sigma(alpha, beta)) with one covariance shared by
/// all sources.
struct SpatialPosterior {
  Matrix mu;  // Ns x F
  double log_alpha = 0.0;
  double log_beta = 0.0;
  GridGeometry grid;

  double alpha() const;
  double beta() const;

  void Validate() const;
};

/// Logistic squashing of unconstrained time-shifts onto the [0, 1] axis.
double Squash(double t);
/// Inverse of Squash; arguments are clamped to [1e-9, 1 - 1e-9].
double Unsquash(double tau);

struct TimeShifts {
  Vector t;  // P, unconstrained

  Vector Squashed() const;
};

struct Hyperparams {
  double sigma = 0.05;
  double lambda = 100.0;
  int n_sources = 3;
  int n_features_rff = 10;
  Vector control_points = DefaultControlPoints(32);
  int n_mc = 1;
  double jitter = 1e-6;

  static Vector DefaultControlPoints(int count);

  void Validate() const;
};

/// Standard-normal draws for the three reparameterizations.
struct NoiseDraws {
  Matrix zeta;     // Ns x J, for Omega
  Matrix epsilon;  // Ns x J, for W
  Matrix kappa;    // Ns x F, for A

  static NoiseDraws Zero(Index sources, Index features_rff, Index features);
  static NoiseDraws Sample(Index sources, Index features_rff, Index features, Rng& rng);
};

struct ElboBreakdown {
  double loglik = 0.0;
  double constraint = 0.0;
  double kl_spatial = 0.0;
  double kl_omega = 0.0;
  double kl_weights = 0.0;

  double total() const {
    return loglik + constraint - kl_spatial - kl_omega - kl_weights;
  }
};

struct ModelState {
  TemporalPosterior temporal;
  SpatialPosterior spatial;
  TimeShifts shifts;
  double log_sigma = 0.0;

  double sigma() const;
  Index sources() const { return temporal.sources(); }
};

/// Documented starting point of every fit; deterministic given seed.
ModelState InitModel(const DataMatrix& data, const Hyperparams& hp, std::uint64_t seed);

}  // namespace stsep
