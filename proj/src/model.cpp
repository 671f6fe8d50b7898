#include "stsep/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "stsep/error.hpp"

namespace stsep {

const char* ToString(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kNotPositiveDefinite: return "not positive definite";
    case ErrorCode::kNonFiniteObjective: return "non-finite objective";
    case ErrorCode::kRankDeficient: return "rank deficient";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kSizeMismatch: return "size mismatch";
    case ErrorCode::kNonFiniteValue: return "non-finite value";
  }
  return "unknown error";
}

GridGeometry GridGeometry::Lattice(Index rows, Index cols) {
  if (rows < 1 || cols < 1) {
    throw Error(ErrorCode::kInvalidArgument, "lattice dimensions must be positive");
  }
  return GridGeometry{rows, cols, true};
}

GridGeometry GridGeometry::Flat(Index n_features) {
  if (n_features < 1) {
    throw Error(ErrorCode::kInvalidArgument, "feature count must be positive");
  }
  return GridGeometry{1, n_features, false};
}

void DataMatrix::Validate() const {
  if (values.rows() < 1 || values.cols() < 1) {
    throw Error(ErrorCode::kShapeMismatch, "data matrix is empty");
  }
  if (!values.allFinite()) {
    throw Error(ErrorCode::kNonFiniteValue, "data matrix contains non-finite entries");
  }
  if (grid.size() != values.cols()) {
    throw Error(ErrorCode::kShapeMismatch,
                "grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
                    " does not match " + std::to_string(values.cols()) + " features");
  }
  if (observed_times) {
    if (observed_times->size() != values.rows()) {
      throw Error(ErrorCode::kShapeMismatch, "observed_times length differs from subject count");
    }
    if (!observed_times->allFinite()) {
      throw Error(ErrorCode::kNonFiniteValue, "observed_times contains non-finite entries");
    }
  }
}

void TemporalPosterior::Validate() const {
  const Index ns = r.rows();
  const Index j = r.cols();
  auto same = [&](const Matrix& x) { return x.rows() == ns && x.cols() == j; };
  if (ns < 1 || j < 1 || !same(log_p) || !same(m) || !same(log_s) || log_l.size() != ns ||
      phases.size() != j) {
    throw Error(ErrorCode::kShapeMismatch, "temporal posterior blocks have inconsistent shapes");
  }
}

double SpatialPosterior::alpha() const { return std::exp(log_alpha); }
double SpatialPosterior::beta() const { return std::exp(log_beta); }

void SpatialPosterior::Validate() const {
  if (mu.cols() != grid.size()) {
    throw Error(ErrorCode::kShapeMismatch, "spatial means do not match grid size");
  }
  if (!std::isfinite(log_alpha) || !std::isfinite(log_beta)) {
    throw Error(ErrorCode::kNonFiniteValue, "kernel scalars must be finite");
  }
}

double Squash(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double Unsquash(double tau) {
  const double x = std::clamp(tau, 1e-9, 1.0 - 1e-9);
  return std::log(x) - std::log1p(-x);
}

Vector TimeShifts::Squashed() const { return t.unaryExpr([](double v) { return Squash(v); }); }

Vector Hyperparams::DefaultControlPoints(int count) {
  if (count < 2) {
    throw Error(ErrorCode::kInvalidArgument, "at least two control points are required");
  }
  return Vector::LinSpaced(count, 0.0, 1.0);
}

void Hyperparams::Validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma must be positive");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be positive");
  }
  if (n_sources < 1) throw Error(ErrorCode::kInvalidArgument, "n_sources must be >= 1");
  if (n_features_rff < 1) throw Error(ErrorCode::kInvalidArgument, "n_features_rff must be >= 1");
  if (n_mc < 1) throw Error(ErrorCode::kInvalidArgument, "n_mc must be >= 1");
  if (!(jitter >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "jitter must be non-negative");
  if (control_points.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "at least two control points are required");
  }
  for (Index c = 0; c < control_points.size(); ++c) {
    const double u = control_points[c];
    if (!(u >= 0.0 && u <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "control points must lie in [0, 1]");
    }
    if (c > 0 && u < control_points[c - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "control points must be sorted");
    }
  }
}

NoiseDraws NoiseDraws::Zero(Index sources, Index features_rff, Index features) {
  return NoiseDraws{Matrix::Zero(sources, features_rff), Matrix::Zero(sources, features_rff),
                    Matrix::Zero(sources, features)};
}

NoiseDraws NoiseDraws::Sample(Index sources, Index features_rff, Index features, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](Index rows, Index cols) {
    Matrix x(rows, cols);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    return x;
  };
  NoiseDraws d;
  d.zeta = fill(sources, features_rff);
  d.epsilon = fill(sources, features_rff);
  d.kappa = fill(sources, features);
  return d;
}

double ModelState::sigma() const { return std::exp(log_sigma); }

ModelState InitModel(const DataMatrix& data, const Hyperparams& hp, std::uint64_t seed) {
  hp.Validate();
  data.Validate();
  const Index ns = hp.n_sources;
  const Index j = hp.n_features_rff;
  const Index f = data.features();
  const Index n_subjects = data.subjects();

  Rng rng(seed);
  std::normal_distribution<double> weight_init(0.0, 0.01);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  ModelState st;
  TemporalPosterior& tp = st.temporal;
  tp.r = Matrix::Zero(ns, j);
  tp.log_p = Matrix::Zero(ns, j);
  tp.m.resize(ns, j);
  for (Index i = 0; i < tp.m.size(); ++i) tp.m.data()[i] = weight_init(rng);
  tp.log_s = Matrix::Zero(ns, j);
  tp.log_l = Vector::Zero(ns);
  tp.phases.resize(j);
  for (Index k = 0; k < j; ++k) tp.phases[k] = phase(rng);

  st.spatial.mu = Matrix::Zero(ns, f);
  st.spatial.log_alpha = 0.0;
  st.spatial.log_beta = std::log(2.0);
  st.spatial.grid = data.grid;

  st.shifts.t = Vector::Zero(n_subjects);
  if (data.observed_times) {
    for (Index p = 0; p < n_subjects; ++p) st.shifts.t[p] = Unsquash((*data.observed_times)[p]);
  }
  st.log_sigma = std::log(hp.sigma);
  return st;
}

}  // namespace stsep
