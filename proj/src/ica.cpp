#include "stsep/ica.hpp"

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "stsep/error.hpp"

namespace stsep {

namespace {

// (W W^T)^{-1/2} W
Matrix SymmetricDecorrelate(const Matrix& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(w * w.transpose()));
  const Vector inv_sqrt = es.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * w;
}

}  // namespace

Whitened Whiten(const Matrix& y, Index n_components) {
  if (n_components < 1 || n_components > std::min(y.rows(), y.cols())) {
    throw Error(ErrorCode::kInvalidArgument, "n_components must lie in [1, min(P, F)]");
  }
  Whitened out;
  out.row_means = y.rowwise().mean();
  const Eigen::MatrixXd centred = y.colwise() - out.row_means;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& d = svd.singularValues();
  if (d.size() < n_components || !(d[n_components - 1] > 1e-10 * std::max(d[0], 1e-300))) {
    throw Error(ErrorCode::kRankDeficient,
                "data rank is below " + std::to_string(n_components) + " components");
  }
  const double root_f = std::sqrt(static_cast<double>(y.cols()));
  const Eigen::MatrixXd u = svd.matrixU().leftCols(n_components);
  const Vector dk = d.head(n_components);
  out.z = root_f * svd.matrixV().leftCols(n_components).transpose();
  out.whitening = root_f * dk.cwiseInverse().asDiagonal() * u.transpose();
  out.dewhitening = u * dk.asDiagonal() / root_f;
  return out;
}

IcaResult FastIca(const Whitened& w, int max_iters, double tol, std::uint64_t seed) {
  const Index k = w.z.rows();
  const double f = static_cast<double>(w.z.cols());
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix unmix(k, k);
  for (Index i = 0; i < unmix.size(); ++i) unmix.data()[i] = normal(rng);
  unmix = SymmetricDecorrelate(unmix);

  IcaResult res;
  for (int it = 0; it < max_iters; ++it) {
    const Matrix proj = unmix * w.z;
    const Matrix g = proj.array().tanh().matrix();
    const Vector mean_dg = (1.0 - g.array().square()).matrix().rowwise().mean();
    Matrix next = g * w.z.transpose() / f - mean_dg.asDiagonal() * unmix;
    next = SymmetricDecorrelate(next);
    const double change =
        ((next * unmix.transpose()).diagonal().cwiseAbs().array() - 1.0).abs().maxCoeff();
    unmix = next;
    res.iterations = it + 1;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  res.unmixing = unmix;
  res.maps = unmix * w.z;
  res.courses = w.dewhitening * unmix.transpose();
  return res;
}

}  // namespace stsep
