#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "stsep/error.hpp"
#include "stsep/temporal.hpp"

namespace stsep {
namespace {

TemporalPosterior Posterior(Index ns, Index j) {
  TemporalPosterior tp;
  tp.r = Matrix::Zero(ns, j);
  tp.log_p = Matrix::Zero(ns, j);
  tp.m = Matrix::Zero(ns, j);
  tp.log_s = Matrix::Zero(ns, j);
  tp.log_l = Vector::Zero(ns);
  tp.phases = Vector::Zero(j);
  return tp;
}

TemporalPosterior RandomPosterior(Index ns, Index j, Rng& rng) {
  std::normal_distribution<double> n01;
  TemporalPosterior tp = Posterior(ns, j);
  auto fill = [&](Matrix& m, double scale) { m = Matrix::NullaryExpr(ns, j, [&] { return scale * n01(rng); }); };
  fill(tp.r, 1.0);
  fill(tp.log_p, 0.5);
  fill(tp.m, 1.0);
  fill(tp.log_s, 0.5);
  tp.log_l = Vector::NullaryExpr(ns, [&] { return 0.5 * n01(rng); });
  std::uniform_real_distribution<double> ph(0.0, 2.0 * M_PI);
  tp.phases = Vector::NullaryExpr(j, [&] { return ph(rng); });
  return tp;
}

TEST(Reparam, Omega) {
  TemporalPosterior tp = Posterior(2, 3);
  tp.r.setConstant(0.7);
  EXPECT_EQ(ReparamOmega(tp, Matrix::Zero(2, 3)), tp.r);

  tp.r.setZero();
  const Matrix z = Matrix::Random(2, 3);
  EXPECT_TRUE(ReparamOmega(tp, z).isApprox(z, 0.0));

  TemporalPosterior one = Posterior(1, 1);
  one.r(0, 0) = 1.0;
  one.log_p(0, 0) = std::log(2.0);
  EXPECT_DOUBLE_EQ(ReparamOmega(one, Matrix::Constant(1, 1, 0.5))(0, 0), 2.0);

  EXPECT_THROW(ReparamOmega(tp, Matrix::Zero(3, 3)), Error);
}

TEST(Reparam, Weights) {
  TemporalPosterior tp = Posterior(2, 3);
  tp.m.setConstant(-0.3);
  EXPECT_EQ(ReparamWeights(tp, Matrix::Zero(2, 3)), tp.m);

  tp.m.setZero();
  const Matrix e = Matrix::Random(2, 3);
  EXPECT_TRUE(ReparamWeights(tp, e).isApprox(e, 0.0));

  TemporalPosterior one = Posterior(1, 1);
  one.m(0, 0) = -1.0;
  one.log_s(0, 0) = std::log(3.0);
  EXPECT_DOUBLE_EQ(ReparamWeights(one, Matrix::Constant(1, 1, 1.0))(0, 0), 2.0);
}

TEST(EvalSources, ZeroWeightsGiveZeroSources) {
  const Vector times = Vector::LinSpaced(7, 0.0, 1.0);
  const Vector cps = Vector::LinSpaced(5, 0.0, 1.0);
  const SourceEval ev = EvalSources(Matrix::Random(2, 4), Matrix::Zero(2, 4), Vector::Random(4), times, cps);
  EXPECT_TRUE(ev.s.isZero(0.0));
  EXPECT_TRUE(ev.s_prime.isZero(0.0));
  EXPECT_EQ(ev.s.cols(), 7);
  EXPECT_EQ(ev.s_prime.cols(), 5);
}

TEST(EvalSources, ZeroFrequencyIsConstant) {
  const double w = 1.7;
  const Vector times = Vector::LinSpaced(5, 0.0, 1.0);
  const SourceEval ev = EvalSources(Matrix::Zero(1, 1), Matrix::Constant(1, 1, w), Vector::Zero(1), times, times);
  for (Index t = 0; t < 5; ++t) {
    EXPECT_DOUBLE_EQ(ev.s(0, t), std::sqrt(2.0) * w);
    EXPECT_DOUBLE_EQ(ev.s_prime(0, t), 0.0);
  }
}

TEST(EvalSources, MatchesTermByTermExpansion) {
  Rng rng(4);
  std::normal_distribution<double> n01;
  const Matrix omega = Matrix::NullaryExpr(3, 5, [&] { return 4.0 * n01(rng); });
  const Matrix w = Matrix::NullaryExpr(3, 5, [&] { return n01(rng); });
  const Vector ph = Vector::NullaryExpr(5, [&] { return n01(rng); });
  const Vector times = Vector::LinSpaced(9, 0.0, 1.0);
  const Matrix s = SourceValues(omega, w, ph, times);
  for (Index n = 0; n < 3; ++n) {
    for (Index t = 0; t < 9; ++t) EXPECT_NEAR(s(n, t), oracle::NaiveSource(omega, w, ph, n, times(t)), 1e-13);
  }
}

double MaxFdError(double max_freq, double h, Rng& rng) {
  std::uniform_real_distribution<double> freq(-max_freq, max_freq);
  std::normal_distribution<double> n01;
  const Matrix omega = Matrix::NullaryExpr(2, 6, [&] { return freq(rng); });
  const Matrix w = Matrix::NullaryExpr(2, 6, [&] { return n01(rng); });
  const Vector ph = Vector::NullaryExpr(6, [&] { return n01(rng); });
  const Vector u = Vector::LinSpaced(11, 0.0, 1.0);
  const Matrix d = SourceDerivatives(omega, w, ph, u);
  const Matrix fd = (SourceValues(omega, w, ph, (u.array() + h).matrix()) -
                     SourceValues(omega, w, ph, (u.array() - h).matrix())) / (2.0 * h);
  return (d - fd).cwiseAbs().maxCoeff();
}

TEST(EvalSources, DerivativeMatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) EXPECT_LT(MaxFdError(10.0, 1e-5, rng), 1e-6) << "trial " << trial;
}

TEST(EvalSources, DerivativeAccurateAtHighFrequency) {
  // Truncation of the h=1e-5 stencil alone reaches ~h^2 |omega|^3 / 6, so
  // the step shrinks for frequencies up to 50.
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) EXPECT_LT(MaxFdError(50.0, 1e-6, rng), 1e-6) << "trial " << trial;
}

TEST(EvalSources, CountsExtrapolatedTimes) {
  const Vector times = (Vector(4) << -0.1, 0.0, 1.0, 1.2).finished();
  const SourceEval ev = EvalSources(Matrix::Ones(1, 2), Matrix::Ones(1, 2), Vector::Zero(2), times, times);
  EXPECT_EQ(ev.n_extrapolated, 2);
}

TEST(Monotonicity, Examples) {
  EXPECT_NEAR(MonotonicityLogProb(Matrix::Zero(3, 4), 100.0), 12.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(MonotonicityLogProb(Matrix::Constant(2, 2, 1e6), 1.0), 0.0, 1e-12);
  EXPECT_NEAR(MonotonicityLogProb(Matrix::Constant(1, 1, 1.0), 1.0), -0.31326168751822286, 1e-12);
  EXPECT_TRUE(std::isfinite(MonotonicityLogProb(Matrix::Constant(1, 1, -1e6), 100.0)));
  EXPECT_NEAR(LogSigmoid(-800.0), -800.0, 1e-9);
}

TEST(Monotonicity, NonDecreasingInEachEntry) {
  Rng rng(6);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix sp = Matrix::NullaryExpr(2, 5, [&] { return 3.0 * n01(rng); });
    const double lambda = std::exp(n01(rng));
    const double base = MonotonicityLogProb(sp, lambda);
    const Index i = trial % sp.size();
    sp.data()[i] += std::abs(n01(rng));
    EXPECT_GE(MonotonicityLogProb(sp, lambda), base);
  }
}

TEST(KlOmega, Examples) {
  EXPECT_EQ(KlOmega(Posterior(2, 3)), 0.0);
  TemporalPosterior tp = Posterior(1, 1);
  tp.r(0, 0) = 1.0;
  EXPECT_DOUBLE_EQ(KlOmega(tp), 0.5);
}

TEST(KlWeights, Examples) {
  EXPECT_EQ(KlWeights(Posterior(3, 2)), 0.0);
  TemporalPosterior tp = Posterior(1, 1);
  tp.m(0, 0) = 2.0;
  EXPECT_DOUBLE_EQ(KlWeights(tp), 2.0);
}

TEST(KlOmega, AgreesWithMonteCarlo) {
  Rng rng(7);
  const TemporalPosterior tp = RandomPosterior(2, 3, rng);
  Matrix prior_std(2, 3);
  for (Index n = 0; n < 2; ++n) prior_std.row(n).setConstant(1.0 / std::sqrt(tp.l()(n)));
  const oracle::Estimate mc = oracle::McKlDiagonal(tp.r, tp.p(), prior_std, 1000000, rng);
  EXPECT_LT(std::abs(KlOmega(tp) - mc.mean), 3.0 * mc.std_error)
      << "closed " << KlOmega(tp) << " mc " << mc.mean << " +- " << mc.std_error;
}

TEST(KlWeights, AgreesWithMonteCarlo) {
  Rng rng(8);
  const TemporalPosterior tp = RandomPosterior(2, 3, rng);
  const oracle::Estimate mc = oracle::McKlDiagonal(tp.m, tp.s(), Matrix::Ones(2, 3), 1000000, rng);
  EXPECT_LT(std::abs(KlWeights(tp) - mc.mean), 3.0 * mc.std_error)
      << "closed " << KlWeights(tp) << " mc " << mc.mean << " +- " << mc.std_error;
}

TEST(Kl, NonNegativeForRandomParameters) {
  Rng rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 500; ++trial) {
    TemporalPosterior tp = RandomPosterior(3, 4, rng);
    tp.log_p *= 4.0;
    tp.log_s *= 4.0;
    tp.log_l *= 4.0;
    // Include points arbitrarily close to the prior, where rounding matters most.
    if (trial % 5 == 0) {
      tp.r *= 1e-9;
      tp.m *= 1e-9;
      tp.log_p = Matrix::NullaryExpr(3, 4, [&] { return 1e-9 * n01(rng); });
      tp.log_s = tp.log_p;
      tp.log_l.setZero();
    }
    EXPECT_GE(KlOmega(tp), 0.0);
    EXPECT_GE(KlWeights(tp), 0.0);
  }
}

TEST(KlOmega, PriorFrequencyVarianceIsInversePrecision) {
  // Prior-matched posterior: r = 0 and p^2 = 1 / l, so KL vanishes and
  // reparameterized draws have variance 1 / l.
  TemporalPosterior tp = Posterior(2, 1);
  tp.log_l << std::log(4.0), std::log(0.25);
  tp.log_p.col(0) = -0.5 * tp.log_l;
  EXPECT_NEAR(KlOmega(tp), 0.0, 1e-15);

  Rng rng(10);
  std::normal_distribution<double> n01;
  const int n = 100000;
  for (Index src = 0; src < 2; ++src) {
    double sum = 0.0, sum_sq = 0.0;
    for (int k = 0; k < n; ++k) {
      Matrix zeta = Matrix::Zero(2, 1);
      zeta(src, 0) = n01(rng);
      const double om = ReparamOmega(tp, zeta)(src, 0);
      sum += om;
      sum_sq += om * om;
    }
    const double var = sum_sq / n - (sum / n) * (sum / n);
    const double want = 1.0 / tp.l()(src);
    // Sample variance of a Gaussian has std error var * sqrt(2 / n).
    EXPECT_LT(std::abs(var - want), 4.0 * want * std::sqrt(2.0 / n));
  }
}

}  // namespace
}  // namespace stsep
