#pragma once

// Shared spatial covariance of the map posterior
//
//   Sigma(alpha, beta) = alpha * K_rows(beta) (x) K_cols(beta) + jitter * I
//
// with K the squared-exponential kernel exp(-(i - i')^2 / (2 beta^2)) on the
// integer lattice coordinates of each axis. Both axes are diagonalised once
// per build; every product with Sigma^{1/2} then runs in the Kronecker
// eigenbasis at O(H^2 W + H W^2) per map. A flat (non-lattice) grid uses an
// identity kernel, so Sigma = (alpha + jitter) I there.

#include <utility>

#include "stsep/model.hpp"

namespace stsep {

/// Eigendecomposition of one axis kernel K = U diag(values) U^T.
struct AxisEigen {
  Index size = 0;
  bool identity = false;  // flat axis: U = I, values = 1, no beta dependence
  Matrix vectors;         // size x size, column k is eigenvector k
  Vector values;
  Matrix dkernel_eig;     // U^T (dK / dlog beta) U
  Matrix sqrt_factor;     // symmetric K^{1/2}
};

struct KernelFactor {
  GridGeometry grid;
  double alpha = 1.0;
  double beta = 1.0;
  double jitter = 0.0;
  AxisEigen row_axis;
  AxisEigen col_axis;
  Matrix eig;       // H x W eigenvalues of Sigma: alpha * l_i * v_j + jitter
  Matrix sqrt_eig;  // elementwise sqrt of eig
  double logdet = 0.0;
  double trace = 0.0;

  /// Symmetric square roots of the axis kernels; Sigma without jitter equals
  /// alpha * (row_factor (x) col_factor)^2.
  const Matrix& row_factor() const { return row_axis.sqrt_factor; }
  const Matrix& col_factor() const { return col_axis.sqrt_factor; }
};

constexpr double kDefaultJitter = 1e-6;

/// Throws Error(kNotPositiveDefinite) if any eigenvalue of Sigma is <= 0,
/// which happens when beta is too large for the grid and jitter is too small.
KernelFactor BuildKernel(const GridGeometry& grid, double alpha, double beta,
                         double jitter = kDefaultJitter);

/// Squared-exponential Gram matrix on 0..n-1.
Matrix AxisKernel(Index n, double beta);

/// Sigma^{1/2} x for one flattened map.
Vector ApplySqrtCovariance(const KernelFactor& kf, const Eigen::Ref<const Vector>& x);

/// A_n = mu_n + Sigma^{1/2} kappa_n for every source.
Matrix SampleMaps(const SpatialPosterior& sp, const KernelFactor& kf, const Matrix& kappa);

/// 1/2 sum_n [ tr(Sigma) + mu_n^T mu_n - F - log det Sigma ].
double KlSpatial(const SpatialPosterior& sp, const KernelFactor& kf);

struct KernelScalarGrad {
  double log_alpha = 0.0;
  double log_beta = 0.0;
};

/// d/d(log alpha, log beta) of sum_n <upstream_n, Sigma^{1/2} kappa_n>.
KernelScalarGrad SqrtCovarianceGrad(const KernelFactor& kf, const Matrix& upstream,
                                    const Matrix& kappa);

/// d/d(log alpha, log beta) of KlSpatial for `n_sources` maps.
KernelScalarGrad KlSpatialGrad(const KernelFactor& kf, Index n_sources);

}  // namespace stsep
