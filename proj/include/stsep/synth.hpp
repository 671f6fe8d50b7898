#pragma once

// Synthetic spatio-temporal benchmark: logistic temporal sources
// S_i(t) = 1 / (1 + exp(-t + alpha_i)), Gaussian-blob maps on an H x W
// lattice, and images Y_p = S(t_p)^T A + noise at random time points.

#include <cstdint>
#include <utility>
#include <vector>

#include "stsep/model.hpp"

namespace stsep {

struct SynthConfig {
  int n_sources = 3;
  std::vector<double> alphas = {0.25, 0.5, 0.75};
  // (row, col) blob centres and widths in lattice cells; empty means defaults.
  std::vector<std::pair<double, double>> centers;
  std::vector<double> widths;
  Index grid_rows = 30;
  Index grid_cols = 30;
  int n_timepoints = 40;
  int n_images = 50;
  // Absolute noise std dev; when negative, noise_fraction * peak |S^T A| is used.
  double noise_std = -1.0;
  double noise_fraction = 0.05;
  bool hide_times = true;
  std::uint64_t seed = 0;

  /// Evenly spread offsets k / (n + 1), k = 1..n.
  static std::vector<double> DefaultAlphas(int n_sources);
  /// Config for `n_sources` sources with every other field at its default.
  static SynthConfig WithSources(int n_sources);

  std::vector<std::pair<double, double>> ResolvedCenters() const;
  std::vector<double> ResolvedWidths() const;
  void Validate() const;
};

struct GroundTruth {
  std::vector<double> alphas;
  Matrix maps;        // Ns x F
  Vector timepoints;  // the distinct acquisition times
  Vector times;       // per-image true time
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
  GridGeometry grid;
};

/// Ns x T matrix of 1 / (1 + exp(-t + alpha_i)).
Matrix SigmoidSources(const std::vector<double>& alphas, const Vector& times);

/// Ns x F matrix of unit-peak Gaussian blobs.
Matrix GaussianMaps(const SynthConfig& cfg);

std::pair<DataMatrix, GroundTruth> Generate(const SynthConfig& cfg);

}  // namespace stsep
