#pragma once

// Spatial FastICA baseline (logcosh contrast, symmetric decorrelation).
// Features are the samples: each subject image is a mixture of independent
// spatial maps.

#include <cstdint>

#include "stsep/model.hpp"

namespace stsep {

struct Whitened {
  Matrix z;            // k x F, rows with zero mean and identity covariance
  Matrix whitening;    // k x P, z = whitening * (Y - row means)
  Matrix dewhitening;  // P x k, (Y - row means) ~= dewhitening * z
  Vector row_means;    // P
};

/// Throws Error(kRankDeficient) when the centred data has fewer than
/// n_components non-negligible singular values.
Whitened Whiten(const Matrix& y, Index n_components);

struct IcaResult {
  Matrix courses;   // P x k temporal courses
  Matrix maps;      // k x F independent spatial maps
  Matrix unmixing;  // k x k orthogonal
  int iterations = 0;
  bool converged = false;
};

IcaResult FastIca(const Whitened& w, int max_iters = 1000, double tol = 1e-8,
                  std::uint64_t seed = 0);

}  // namespace stsep
