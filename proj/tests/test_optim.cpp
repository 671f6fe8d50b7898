#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "stsep/elbo.hpp"
#include "stsep/error.hpp"
#include "stsep/optim.hpp"
#include "stsep/synth.hpp"

namespace stsep {
namespace {

ModelState PriorState(const DataMatrix& d, Index ns, Index j) {
  Hyperparams hp;
  hp.n_sources = static_cast<int>(ns);
  hp.n_features_rff = static_cast<int>(j);
  ModelState st = InitModel(d, hp, 0);
  st.temporal.m.setZero();
  return st;
}

DataMatrix ZeroData(Index p, Index h, Index w) {
  DataMatrix d;
  d.values = Matrix::Zero(p, h * w);
  d.grid = GridGeometry::Lattice(h, w);
  return d;
}

TEST(GradElbo, VanishesAtKlMinimaWithZeroData) {
  const DataMatrix d = ZeroData(4, 2, 3);
  Hyperparams hp;
  hp.n_sources = 2;
  hp.n_features_rff = 3;
  const ModelState st = PriorState(d, 2, 3);
  const ElboGradient g = GradElbo(st, d, hp, {NoiseDraws::Zero(2, 3, 6)});
  EXPECT_TRUE(g.grad.m.isZero(0.0));
  EXPECT_TRUE(g.grad.r.isZero(0.0));
  EXPECT_TRUE(g.grad.mu.isZero(0.0));
}

TEST(GradElbo, WeightMeanGradientIsMinusMean) {
  // With r = 0 and zero draws every source derivative vanishes, and with
  // mu = 0 the likelihood does not see W, leaving only -d KL_W / dm = -m.
  const DataMatrix d = ZeroData(5, 2, 2);
  Hyperparams hp;
  hp.n_sources = 2;
  hp.n_features_rff = 4;
  ModelState st = PriorState(d, 2, 4);
  st.temporal.m = Matrix::Random(2, 4);
  st.temporal.log_s = Matrix::Random(2, 4);
  const ElboGradient g = GradElbo(st, d, hp, {NoiseDraws::Zero(2, 4, 4)});
  EXPECT_EQ(g.grad.m, Matrix(-st.temporal.m));
}

TEST(GradElbo, ValueMatchesElbo) {
  const CheckInstance ci = MakeCheckInstance("small", 1);
  const ElboGradient g = GradElbo(ci.state, ci.data, ci.hp, ci.draws);
  const ElboBreakdown e = Elbo(ci.state, ci.data, ci.hp, ci.draws);
  EXPECT_NEAR(g.value.total(), e.total(), 1e-10 * std::abs(e.total()));
}

class GradCheck : public ::testing::TestWithParam<std::tuple<std::string, int>> {};

TEST_P(GradCheck, EveryBlockMatchesFiniteDifferences) {
  const auto& [name, seed] = GetParam();
  const CheckInstance ci = MakeCheckInstance(name, static_cast<std::uint64_t>(seed));
  const ElboGradient g = GradElbo(ci.state, ci.data, ci.hp, ci.draws);
  const ModelGradient fd = FiniteDifferenceGradient(ci.state, ci.data, ci.hp, ci.draws, 1e-5);
  const GradCheckReport rep = CompareGradients(ci.state, g.grad, fd, 1e-5, 1e-8);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.blocks.size(), 10u);
  for (const GradCheckBlock& b : rep.blocks) {
    EXPECT_LT(b.max_rel_error, 1e-5) << b.name << " worst index " << b.worst_index;
  }
}

INSTANTIATE_TEST_SUITE_P(Instances, GradCheck,
                         ::testing::Combine(::testing::Values("tiny", "small"), ::testing::Values(0, 1, 2)));

TEST(GradElbo, FlatGridHasNoLengthscaleGradient) {
  CheckInstance ci = MakeCheckInstance("small", 4);
  ci.data.grid = GridGeometry::Flat(9);
  ci.state.spatial.grid = ci.data.grid;
  const ElboGradient g = GradElbo(ci.state, ci.data, ci.hp, ci.draws);
  const ModelGradient fd = FiniteDifferenceGradient(ci.state, ci.data, ci.hp, ci.draws);
  EXPECT_EQ(g.grad.log_beta, 0.0);
  EXPECT_TRUE(CompareGradients(ci.state, g.grad, fd).passed);
}

TEST(GradElbo, IndependentOfThreadCount) {
  const CheckInstance ci = MakeCheckInstance("small", 6);
  const ElboGradient a = GradElbo(ci.state, ci.data, ci.hp, ci.draws, 1);
  const ElboGradient b = GradElbo(ci.state, ci.data, ci.hp, ci.draws, 5);
  EXPECT_EQ(PackGradient(a.grad), PackGradient(b.grad));
}

TEST(Params, PackUnpackRoundTrip) {
  const CheckInstance ci = MakeCheckInstance("small", 2);
  const Vector x = PackParams(ci.state);
  const auto layout = ParamLayout(ci.state);
  EXPECT_EQ(layout.front().name, "mu");
  EXPECT_EQ(layout.back().name, "log_sigma");
  EXPECT_EQ(layout.back().offset + layout.back().size, x.size());
  ModelState other = InitModel(ci.data, ci.hp, 99);
  UnpackParams(x, other);
  EXPECT_EQ(PackParams(other), x);
  EXPECT_EQ(other.temporal.log_l, ci.state.temporal.log_l);
  EXPECT_EQ(other.shifts.t, ci.state.shifts.t);
}

SynthConfig SmallSynth(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.grid_rows = cfg.grid_cols = 10;
  cfg.centers = {{2.5, 2.5}, {2.5, 7.0}, {7.0, 5.0}};
  cfg.widths = {1.5, 1.5, 1.5};
  cfg.n_images = 30;
  cfg.seed = seed;
  return cfg;
}

FitConfig ShortFit(int iters) {
  FitConfig cfg;
  cfg.max_iters = iters;
  cfg.report_mc = 4;
  return cfg;
}

TEST(Fit, EqualSeedsGiveIdenticalTraces) {
  const auto [data, truth] = Generate(SmallSynth(1));
  const FitTrace a = Fit(data, {}, ShortFit(200));
  const FitTrace b = Fit(data, {}, ShortFit(200));
  ASSERT_EQ(a.elbo.size(), b.elbo.size());
  for (std::size_t i = 0; i < a.elbo.size(); ++i) EXPECT_EQ(a.elbo[i].total(), b.elbo[i].total());
  EXPECT_EQ(PackParams(a.final_state), PackParams(b.final_state));
}

TEST(Fit, IndependentOfThreadCount) {
  const auto [data, truth] = Generate(SmallSynth(2));
  FitConfig one = ShortFit(100), many = ShortFit(100);
  many.threads = 4;
  EXPECT_EQ(PackParams(Fit(data, {}, one).final_state), PackParams(Fit(data, {}, many).final_state));
}

TEST(Fit, ZeroLearningRateLeavesStateUnchanged) {
  const auto [data, truth] = Generate(SmallSynth(3));
  FitConfig cfg = ShortFit(50);
  cfg.learning_rate = 0.0;
  const FitTrace tr = Fit(data, {}, cfg);
  EXPECT_EQ(PackParams(tr.final_state), PackParams(InitModel(data, {}, cfg.seed)));
}

TEST(Fit, FixedTimesAndNoiseAreNotUpdated) {
  auto [data, truth] = Generate(SmallSynth(4));
  data.observed_times = truth.times;
  FitConfig cfg = ShortFit(100);
  cfg.learn_times = false;
  const ModelState init = InitModel(data, {}, cfg.seed);
  const FitTrace tr = Fit(data, {}, cfg);
  EXPECT_EQ(tr.final_state.shifts.t, init.shifts.t);
  EXPECT_EQ(tr.final_state.log_sigma, init.log_sigma);
  EXPECT_NE(tr.final_state.spatial.mu, init.spatial.mu);

  cfg.learn_sigma = true;
  EXPECT_NE(Fit(data, {}, cfg).final_state.log_sigma, init.log_sigma);
}

TEST(Fit, AscendsOnDefaultSyntheticData) {
  SynthConfig cfg;
  cfg.seed = 5;
  const auto [data, truth] = Generate(cfg);
  const FitTrace tr = Fit(data, {}, ShortFit(1500));
  auto window = [&](std::size_t begin) {
    double s = 0.0;
    for (std::size_t i = begin; i < begin + 50; ++i) s += tr.elbo[i].total();
    return s / 50;
  };
  EXPECT_GT(window(tr.elbo.size() - 50), window(0));
}

TEST(Fit, SmoothedTraceIsNonDecreasingOnceConverged) {
  const auto [data, truth] = Generate(SmallSynth(6));
  const FitTrace tr = Fit(data, {}, ShortFit(20000));
  ASSERT_TRUE(tr.converged);
  // Tolerance is the standard error of a recorded single-draw ELBO, its
  // spread taken from successive differences inside each block.
  const std::size_t w = 50;
  const std::size_t n_blocks = tr.elbo.size() / w;
  std::vector<double> smooth, se;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    double s = 0.0, ss = 0.0;
    for (std::size_t i = b * w; i < (b + 1) * w; ++i) {
      s += tr.elbo[i].total();
      if (i > b * w) ss += std::pow(tr.elbo[i].total() - tr.elbo[i - 1].total(), 2);
    }
    smooth.push_back(s / w);
    se.push_back(std::sqrt(ss / (2.0 * (w - 1))));
  }
  for (std::size_t b = n_blocks / 5 + 1; b < n_blocks; ++b) {
    EXPECT_GE(smooth[b], smooth[b - 1] - se[b - 1]) << "block " << b << " of " << n_blocks;
  }
}

TEST(Fit, FloorsCollapsedStandardDeviations) {
  const auto [data, truth] = Generate(SmallSynth(7));
  Hyperparams hp;
  ModelState st = InitModel(data, hp, 0);
  st.temporal.log_p.setConstant(-40.0);
  const FitTrace tr = FitFrom(st, data, hp, ShortFit(2));
  EXPECT_GT(tr.degeneracy_count, 0);
  EXPECT_GE(tr.final_state.temporal.p().minCoeff(), kStdFloor * (1 - 1e-12));
}

TEST(Fit, ReportsNonFiniteObjective) {
  DataMatrix d = ZeroData(4, 2, 2);
  d.values.setConstant(1e200);
  try {
    Fit(d, {}, ShortFit(5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteObjective);
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("loglik"), std::string::npos) << e.what();
  }
}

TEST(FitConfig, ValidateRejectsBadValues) {
  FitConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.max_iters = 0;
  EXPECT_THROW(c.Validate(), Error);
  c = {};
  c.learning_rate = -1.0;
  EXPECT_THROW(c.Validate(), Error);
  c = {};
  c.beta2 = 1.0;
  EXPECT_THROW(c.Validate(), Error);
}

}  // namespace
}  // namespace stsep
