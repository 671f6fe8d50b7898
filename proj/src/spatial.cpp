#include "stsep/spatial.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "stsep/error.hpp"

namespace stsep {

namespace {

using MapView = Eigen::Map<const Matrix>;

AxisEigen IdentityAxis(Index n) {
  AxisEigen ax;
  ax.size = n;
  ax.identity = true;
  ax.values = Vector::Ones(n);
  return ax;
}

AxisEigen DecomposeAxis(Index n, double beta) {
  AxisEigen ax;
  ax.size = n;
  const Matrix k = AxisKernel(n, beta);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite, "axis kernel eigendecomposition failed");
  }
  ax.vectors = solver.eigenvectors();
  ax.values = solver.eigenvalues();

  // dk/dlog(beta) = k * d^2 / beta^2
  Matrix dk(n, n);
  const double inv_b2 = 1.0 / (beta * beta);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(i - j);
      dk(i, j) = k(i, j) * d * d * inv_b2;
    }
  }
  ax.dkernel_eig = ax.vectors.transpose() * dk * ax.vectors;
  const Vector root = ax.values.cwiseMax(0.0).cwiseSqrt();
  ax.sqrt_factor = ax.vectors * root.asDiagonal() * ax.vectors.transpose();
  return ax;
}

// U^T X V for the H x W map X.
Matrix ToEigenBasis(const KernelFactor& kf, const double* flat) {
  const MapView x(flat, kf.grid.rows, kf.grid.cols);
  Matrix b = x;
  if (!kf.row_axis.identity) b = kf.row_axis.vectors.transpose() * b;
  if (!kf.col_axis.identity) b = b * kf.col_axis.vectors;
  return b;
}

// U B V^T.
Matrix FromEigenBasis(const KernelFactor& kf, Matrix b) {
  if (!kf.row_axis.identity) b = kf.row_axis.vectors * b;
  if (!kf.col_axis.identity) b = b * kf.col_axis.vectors.transpose();
  return b;
}

void CheckMaps(const KernelFactor& kf, const Matrix& maps, const char* what) {
  if (maps.cols() != kf.grid.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(what) + ": map length does not match kernel grid");
  }
}

}  // namespace

Matrix AxisKernel(Index n, double beta) {
  Matrix k(n, n);
  const double inv = 1.0 / (2.0 * beta * beta);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(i - j);
      k(i, j) = std::exp(-d * d * inv);
    }
  }
  return k;
}

KernelFactor BuildKernel(const GridGeometry& grid, double alpha, double beta, double jitter) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidArgument, "kernel amplitude and lengthscale must be positive");
  }
  if (!(jitter >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "jitter must be non-negative");

  KernelFactor kf;
  kf.grid = grid;
  kf.alpha = alpha;
  kf.beta = beta;
  kf.jitter = jitter;
  if (grid.lattice) {
    kf.row_axis = DecomposeAxis(grid.rows, beta);
    kf.col_axis = DecomposeAxis(grid.cols, beta);
  } else {
    kf.row_axis = IdentityAxis(grid.rows);
    kf.col_axis = IdentityAxis(grid.cols);
  }

  kf.eig = alpha * (kf.row_axis.values * kf.col_axis.values.transpose());
  kf.eig.array() += jitter;
  const double min_eig = kf.eig.minCoeff();
  if (!(min_eig > 0.0)) {
    throw Error(ErrorCode::kNotPositiveDefinite,
                "covariance not positive definite (min eigenvalue " + std::to_string(min_eig) +
                    "); lengthscale too large for the grid or jitter too small");
  }
  kf.sqrt_eig = kf.eig.cwiseSqrt();
  kf.logdet = kf.eig.array().log().sum();
  kf.trace = alpha * static_cast<double>(grid.size()) + jitter * static_cast<double>(grid.size());
  return kf;
}

Vector ApplySqrtCovariance(const KernelFactor& kf, const Eigen::Ref<const Vector>& x) {
  if (x.size() != kf.grid.size()) {
    throw Error(ErrorCode::kShapeMismatch, "map length does not match kernel grid");
  }
  const Vector contiguous = x;
  Matrix b = ToEigenBasis(kf, contiguous.data());
  b.array() *= kf.sqrt_eig.array();
  const Matrix out = FromEigenBasis(kf, std::move(b));
  return Eigen::Map<const Vector>(out.data(), out.size());
}

Matrix SampleMaps(const SpatialPosterior& sp, const KernelFactor& kf, const Matrix& kappa) {
  CheckMaps(kf, sp.mu, "SampleMaps");
  CheckMaps(kf, kappa, "SampleMaps");
  if (kappa.rows() != sp.mu.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "SampleMaps: kappa rows do not match source count");
  }
  Matrix a = sp.mu;
  for (Index n = 0; n < kappa.rows(); ++n) {
    Matrix b = ToEigenBasis(kf, kappa.row(n).data());
    b.array() *= kf.sqrt_eig.array();
    const Matrix z = FromEigenBasis(kf, std::move(b));
    a.row(n) += Eigen::Map<const Eigen::RowVectorXd>(z.data(), z.size());
  }
  return a;
}

double KlSpatial(const SpatialPosterior& sp, const KernelFactor& kf) {
  CheckMaps(kf, sp.mu, "KlSpatial");
  const double f = static_cast<double>(kf.grid.size());
  const double ns = static_cast<double>(sp.mu.rows());
  const double per_source = (kf.trace - f) - kf.logdet;
  return 0.5 * (ns * per_source + sp.mu.squaredNorm());
}

KernelScalarGrad SqrtCovarianceGrad(const KernelFactor& kf, const Matrix& upstream,
                                    const Matrix& kappa) {
  CheckMaps(kf, upstream, "SqrtCovarianceGrad");
  CheckMaps(kf, kappa, "SqrtCovarianceGrad");
  const Index h = kf.grid.rows;
  const Index w = kf.grid.cols;
  const Vector& lam = kf.row_axis.values;
  const Vector& nu = kf.col_axis.values;
  const Matrix& e = kf.sqrt_eig;

  KernelScalarGrad g;
  for (Index n = 0; n < upstream.rows(); ++n) {
    const Matrix ga = ToEigenBasis(kf, upstream.row(n).data());
    const Matrix b = ToEigenBasis(kf, kappa.row(n).data());

    // Diagonal direction: dSigma/dlog(alpha) = alpha * l_i v_j in the eigenbasis,
    // and d sqrt(x) = dx / (2 sqrt(x)).
    for (Index i = 0; i < h; ++i) {
      for (Index j = 0; j < w; ++j) {
        g.log_alpha += ga(i, j) * b(i, j) * kf.alpha * lam[i] * nu[j] / (2.0 * e(i, j));
      }
    }

    // Off-diagonal direction via divided differences of sqrt:
    // (sqrt(x) - sqrt(y)) / (x - y) = 1 / (sqrt(x) + sqrt(y)).
    double acc = 0.0;
    if (!kf.row_axis.identity) {
      const Matrix& mh = kf.row_axis.dkernel_eig;
      for (Index i = 0; i < h; ++i) {
        for (Index ip = 0; ip < h; ++ip) {
          const double mii = mh(i, ip);
          for (Index j = 0; j < w; ++j) {
            acc += ga(i, j) * mii * nu[j] * b(ip, j) / (e(i, j) + e(ip, j));
          }
        }
      }
    }
    if (!kf.col_axis.identity) {
      const Matrix& mw = kf.col_axis.dkernel_eig;
      for (Index i = 0; i < h; ++i) {
        for (Index j = 0; j < w; ++j) {
          double inner = 0.0;
          for (Index jp = 0; jp < w; ++jp) {
            inner += mw(j, jp) * b(i, jp) / (e(i, j) + e(i, jp));
          }
          acc += ga(i, j) * lam[i] * inner;
        }
      }
    }
    g.log_beta += kf.alpha * acc;
  }
  return g;
}

KernelScalarGrad KlSpatialGrad(const KernelFactor& kf, Index n_sources) {
  const Index h = kf.grid.rows;
  const Index w = kf.grid.cols;
  const Vector& lam = kf.row_axis.values;
  const Vector& nu = kf.col_axis.values;
  double dlogdet_alpha = 0.0;
  double dlogdet_beta = 0.0;
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < w; ++j) {
      const double inv = 1.0 / kf.eig(i, j);
      dlogdet_alpha += kf.alpha * lam[i] * nu[j] * inv;
      double dd = 0.0;
      if (!kf.row_axis.identity) dd += kf.row_axis.dkernel_eig(i, i) * nu[j];
      if (!kf.col_axis.identity) dd += lam[i] * kf.col_axis.dkernel_eig(j, j);
      dlogdet_beta += kf.alpha * dd * inv;
    }
  }
  const double ns = static_cast<double>(n_sources);
  const double dtrace_alpha = kf.alpha * static_cast<double>(kf.grid.size());
  return KernelScalarGrad{0.5 * ns * (dtrace_alpha - dlogdet_alpha), -0.5 * ns * dlogdet_beta};
}

}  // namespace stsep
