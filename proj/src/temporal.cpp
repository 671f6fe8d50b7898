#include "stsep/temporal.hpp"

#include <cmath>

#include "stsep/error.hpp"

namespace stsep {

namespace {

void CheckSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": noise shape does not match posterior");
  }
}

void CheckFeatureShapes(const Matrix& omega, const Matrix& w, const Vector& phases) {
  if (omega.rows() != w.rows() || omega.cols() != w.cols() || phases.size() != omega.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "frequencies, weights and phases disagree in shape");
  }
}

}  // namespace

Matrix ReparamOmega(const TemporalPosterior& tp, const Matrix& zeta) {
  CheckSameShape(tp.r, zeta, "ReparamOmega");
  return (tp.r.array() + tp.p().array() * zeta.array()).matrix();
}

Matrix ReparamWeights(const TemporalPosterior& tp, const Matrix& epsilon) {
  CheckSameShape(tp.m, epsilon, "ReparamWeights");
  return (tp.m.array() + tp.s().array() * epsilon.array()).matrix();
}

Matrix SourceValues(const Matrix& omega, const Matrix& w, const Vector& phases,
                    const Vector& times) {
  CheckFeatureShapes(omega, w, phases);
  const Index ns = omega.rows();
  const Index nj = omega.cols();
  const double scale = std::sqrt(2.0 / static_cast<double>(nj));
  Matrix out(ns, times.size());
  for (Index n = 0; n < ns; ++n) {
    for (Index t = 0; t < times.size(); ++t) {
      double acc = 0.0;
      for (Index j = 0; j < nj; ++j) acc += w(n, j) * std::cos(omega(n, j) * times[t] + phases[j]);
      out(n, t) = scale * acc;
    }
  }
  return out;
}

Matrix SourceDerivatives(const Matrix& omega, const Matrix& w, const Vector& phases,
                         const Vector& times) {
  CheckFeatureShapes(omega, w, phases);
  const Index ns = omega.rows();
  const Index nj = omega.cols();
  const double scale = std::sqrt(2.0 / static_cast<double>(nj));
  Matrix out(ns, times.size());
  for (Index n = 0; n < ns; ++n) {
    for (Index t = 0; t < times.size(); ++t) {
      double acc = 0.0;
      for (Index j = 0; j < nj; ++j) {
        acc += w(n, j) * omega(n, j) * std::sin(omega(n, j) * times[t] + phases[j]);
      }
      out(n, t) = -scale * acc;
    }
  }
  return out;
}

SourceEval EvalSources(const Matrix& omega, const Matrix& w, const Vector& phases,
                       const Vector& times, const Vector& control_points) {
  SourceEval ev;
  ev.s = SourceValues(omega, w, phases, times);
  ev.s_prime = SourceDerivatives(omega, w, phases, control_points);
  for (Index t = 0; t < times.size(); ++t) {
    if (times[t] < 0.0 || times[t] > 1.0) ++ev.n_extrapolated;
  }
  return ev;
}

double LogSigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double MonotonicityLogProb(const Matrix& s_prime, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lambda must be positive");
  double acc = 0.0;
  for (Index i = 0; i < s_prime.size(); ++i) acc += LogSigmoid(lambda * s_prime.data()[i]);
  return acc;
}

double KlOmega(const TemporalPosterior& tp) {
  double acc = 0.0;
  for (Index n = 0; n < tp.sources(); ++n) {
    const double l = std::exp(tp.log_l[n]);
    for (Index j = 0; j < tp.features(); ++j) {
      // p^2 l - 1 - log(p^2 l) == expm1(y) - y with y = log(p^2 l), which
      // stays non-negative under rounding.
      const double y = 2.0 * tp.log_p(n, j) + tp.log_l[n];
      const double r = tp.r(n, j);
      acc += std::expm1(y) - y + r * r * l;
    }
  }
  return 0.5 * acc;
}

double KlWeights(const TemporalPosterior& tp) {
  double acc = 0.0;
  for (Index i = 0; i < tp.m.size(); ++i) {
    const double log_s = tp.log_s.data()[i];
    const double m = tp.m.data()[i];
    acc += std::expm1(2.0 * log_s) - 2.0 * log_s + m * m;
  }
  return 0.5 * acc;
}

}  // namespace stsep
