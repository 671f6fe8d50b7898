#include "stsep/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "stsep/error.hpp"

namespace stsep {

std::vector<double> SynthConfig::DefaultAlphas(int n_sources) {
  std::vector<double> out;
  for (int k = 1; k <= n_sources; ++k) {
    out.push_back(static_cast<double>(k) / static_cast<double>(n_sources + 1));
  }
  return out;
}

SynthConfig SynthConfig::WithSources(int n_sources) {
  SynthConfig cfg;
  cfg.n_sources = n_sources;
  cfg.alphas = DefaultAlphas(n_sources);
  return cfg;
}

std::vector<std::pair<double, double>> SynthConfig::ResolvedCenters() const {
  if (!centers.empty()) return centers;
  const double h = static_cast<double>(grid_rows);
  const double w = static_cast<double>(grid_cols);
  // Lattice thirds for up to three blobs, a ring around the centre beyond.
  const std::vector<std::pair<double, double>> thirds = {
      {h / 3.0, w / 3.0}, {h / 3.0, 2.0 * w / 3.0}, {2.0 * h / 3.0, w / 2.0}};
  std::vector<std::pair<double, double>> out;
  if (n_sources <= 3) {
    out.assign(thirds.begin(), thirds.begin() + n_sources);
    return out;
  }
  const double radius = std::min(h, w) / 3.0;
  for (int k = 0; k < n_sources; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / n_sources;
    out.emplace_back(h / 2.0 + radius * std::sin(angle), w / 2.0 + radius * std::cos(angle));
  }
  return out;
}

std::vector<double> SynthConfig::ResolvedWidths() const {
  if (!widths.empty()) return widths;
  return std::vector<double>(static_cast<size_t>(n_sources), 4.0);
}

void SynthConfig::Validate() const {
  if (n_sources < 1) throw Error(ErrorCode::kInvalidArgument, "n_sources must be >= 1");
  if (static_cast<int>(alphas.size()) != n_sources) {
    throw Error(ErrorCode::kInvalidArgument, "alphas length must equal n_sources");
  }
  if (grid_rows < 1 || grid_cols < 1) throw Error(ErrorCode::kInvalidArgument, "grid must be non-empty");
  if (n_timepoints < 1 || n_images < 1) {
    throw Error(ErrorCode::kInvalidArgument, "n_timepoints and n_images must be >= 1");
  }
  if (!centers.empty() && static_cast<int>(centers.size()) != n_sources) {
    throw Error(ErrorCode::kInvalidArgument, "centers length must equal n_sources");
  }
  if (!widths.empty() && static_cast<int>(widths.size()) != n_sources) {
    throw Error(ErrorCode::kInvalidArgument, "widths length must equal n_sources");
  }
  for (const auto& [r, c] : ResolvedCenters()) {
    if (r < 0.0 || r > static_cast<double>(grid_rows - 1) || c < 0.0 ||
        c > static_cast<double>(grid_cols - 1)) {
      throw Error(ErrorCode::kInvalidArgument, "blob centre outside the lattice");
    }
  }
  for (double w : ResolvedWidths()) {
    if (!(w > 0.0)) throw Error(ErrorCode::kInvalidArgument, "blob widths must be positive");
  }
  if (!std::isfinite(noise_std) || !(noise_fraction >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise level must be finite and non-negative");
  }
}

Matrix SigmoidSources(const std::vector<double>& alphas, const Vector& times) {
  Matrix s(static_cast<Index>(alphas.size()), times.size());
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index t = 0; t < times.size(); ++t) {
      s(i, t) = 1.0 / (1.0 + std::exp(-times[t] + alphas[static_cast<size_t>(i)]));
    }
  }
  return s;
}

Matrix GaussianMaps(const SynthConfig& cfg) {
  cfg.Validate();
  const auto centers = cfg.ResolvedCenters();
  const auto widths = cfg.ResolvedWidths();
  Matrix a(cfg.n_sources, cfg.grid_rows * cfg.grid_cols);
  for (int n = 0; n < cfg.n_sources; ++n) {
    const auto [cr, cc] = centers[static_cast<size_t>(n)];
    const double w2 = widths[static_cast<size_t>(n)] * widths[static_cast<size_t>(n)];
    for (Index i = 0; i < cfg.grid_rows; ++i) {
      for (Index j = 0; j < cfg.grid_cols; ++j) {
        const double di = static_cast<double>(i) - cr;
        const double dj = static_cast<double>(j) - cc;
        a(n, i * cfg.grid_cols + j) = std::exp(-(di * di + dj * dj) / (2.0 * w2));
      }
    }
  }
  return a;
}

std::pair<DataMatrix, GroundTruth> Generate(const SynthConfig& cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, cfg.n_timepoints - 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  GroundTruth gt;
  gt.alphas = cfg.alphas;
  gt.grid = GridGeometry::Lattice(cfg.grid_rows, cfg.grid_cols);
  gt.maps = GaussianMaps(cfg);
  gt.timepoints.resize(cfg.n_timepoints);
  for (Index k = 0; k < gt.timepoints.size(); ++k) gt.timepoints[k] = unit(rng);
  gt.times.resize(cfg.n_images);
  for (Index p = 0; p < gt.times.size(); ++p) gt.times[p] = gt.timepoints[pick(rng)];

  const Matrix s = SigmoidSources(cfg.alphas, gt.times);
  DataMatrix data;
  data.grid = gt.grid;
  data.values = s.transpose() * gt.maps;
  gt.noise_std = cfg.noise_std >= 0.0 ? cfg.noise_std
                                      : cfg.noise_fraction * data.values.cwiseAbs().maxCoeff();
  gt.noise_seed = cfg.seed;
  if (gt.noise_std > 0.0) {
    for (Index i = 0; i < data.values.size(); ++i) {
      data.values.data()[i] += gt.noise_std * normal(rng);
    }
  }
  if (!cfg.hide_times) data.observed_times = gt.times;
  return {std::move(data), std::move(gt)};
}

}  // namespace stsep
