#include <cmath>

#include <gtest/gtest.h>

#include "stsep/error.hpp"
#include "stsep/eval.hpp"
#include "stsep/io.hpp"
#include "stsep/synth.hpp"

namespace stsep {
namespace {

TEST(SigmoidSources, Midpoints) {
  EXPECT_DOUBLE_EQ(SigmoidSources({0.0}, Vector::Zero(1))(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(SigmoidSources({0.5}, Vector::Constant(1, 0.5))(0, 0), 0.5);
}

TEST(SigmoidSources, StrictlyIncreasing) {
  const Vector t = Vector::LinSpaced(200, -3.0, 3.0);
  const Matrix s = SigmoidSources({0.25, 0.5, 0.75, -1.0}, t);
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index k = 1; k < t.size(); ++k) EXPECT_GT(s(i, k), s(i, k - 1));
  }
}

TEST(GaussianMaps, PeakAndWidth) {
  const SynthConfig cfg;
  const Matrix a = GaussianMaps(cfg);
  const auto centers = cfg.ResolvedCenters();
  for (int n = 0; n < 3; ++n) {
    const Index r = static_cast<Index>(centers[n].first), c = static_cast<Index>(centers[n].second);
    EXPECT_DOUBLE_EQ(a(n, r * 30 + c), 1.0);
    EXPECT_NEAR(a(n, (r + 4) * 30 + c), std::exp(-0.5), 1e-15);
    EXPECT_NEAR(a(n, r * 30 + c - 4), 0.6065306597126334, 1e-15);
  }
}

TEST(GaussianMaps, DefaultBlobsAreNearlyUncorrelated) {
  const Matrix a = GaussianMaps(SynthConfig{});
  for (Index i = 0; i < 3; ++i) {
    for (Index j = i + 1; j < 3; ++j) {
      const double c = *Pearson(a.row(i).transpose(), a.row(j).transpose());
      EXPECT_LT(c, 0.2) << i << "," << j;
    }
  }
}

TEST(Generate, NoiselessDataIsExactMixture) {
  SynthConfig cfg;
  cfg.noise_std = 0.0;
  cfg.seed = 4;
  const auto [data, truth] = Generate(cfg);
  const Matrix s = SigmoidSources(truth.alphas, truth.times);
  for (Index p = 0; p < data.values.rows(); ++p) {
    Vector want = Vector::Zero(900);
    for (Index n = 0; n < 3; ++n) want += s(n, p) * truth.maps.row(n).transpose();
    EXPECT_EQ(Vector(data.values.row(p).transpose()), want);
  }
}

TEST(Generate, ShapesAndHiddenTimes) {
  SynthConfig cfg;
  const auto [data, truth] = Generate(cfg);
  EXPECT_EQ(data.values.rows(), 50);
  EXPECT_EQ(data.values.cols(), 900);
  EXPECT_EQ(data.grid, GridGeometry::Lattice(30, 30));
  EXPECT_FALSE(data.observed_times.has_value());
  EXPECT_EQ(truth.timepoints.size(), 40);
  for (Index p = 0; p < 50; ++p) {
    EXPECT_TRUE((truth.timepoints.array() == truth.times(p)).any());
    EXPECT_GE(truth.times(p), 0.0);
    EXPECT_LE(truth.times(p), 1.0);
  }
  cfg.hide_times = false;
  const auto [known, truth2] = Generate(cfg);
  ASSERT_TRUE(known.observed_times.has_value());
  EXPECT_EQ(*known.observed_times, truth2.times);
}

TEST(Generate, EqualSeedsGiveIdenticalData) {
  SynthConfig cfg;
  cfg.seed = 9;
  const auto a = Generate(cfg);
  const auto b = Generate(cfg);
  EXPECT_EQ(a.first.values, b.first.values);
  EXPECT_EQ(a.second.times, b.second.times);
  cfg.seed = 10;
  EXPECT_NE(Generate(cfg).first.values, a.first.values);
}

TEST(Generate, EmpiricalNoiseLevel) {
  SynthConfig cfg;
  cfg.seed = 11;
  const auto [data, truth] = Generate(cfg);
  const Matrix clean = SigmoidSources(truth.alphas, truth.times).transpose() * truth.maps;
  const Matrix r = data.values - clean;
  const double sd = std::sqrt((r.array() - r.mean()).square().sum() / (r.size() - 1));
  EXPECT_NEAR(sd, truth.noise_std, 0.02 * truth.noise_std);
  EXPECT_NEAR(truth.noise_std, 0.05 * clean.cwiseAbs().maxCoeff(), 1e-15);

  cfg.noise_std = 0.2;
  const auto [d2, t2] = Generate(cfg);
  EXPECT_EQ(t2.noise_std, 0.2);
}

TEST(Generate, GroundTruthRoundTripsThroughJson) {
  const auto [data, truth] = Generate(SynthConfig{});
  const GroundTruth back = GroundTruthFromJson(Json::parse(ToJson(truth).dump()));
  EXPECT_EQ(back.maps, truth.maps);
  EXPECT_EQ(back.times, truth.times);
  EXPECT_EQ(back.timepoints, truth.timepoints);
  EXPECT_EQ(back.alphas, truth.alphas);
  EXPECT_EQ(back.noise_std, truth.noise_std);
  EXPECT_EQ(back.grid, truth.grid);
}

TEST(SynthConfig, MoreSourcesAndValidation) {
  const SynthConfig four = SynthConfig::WithSources(4);
  EXPECT_EQ(four.alphas, (std::vector<double>{0.2, 0.4, 0.6, 0.8}));
  EXPECT_EQ(GaussianMaps(four).rows(), 4);

  SynthConfig bad;
  bad.alphas = {0.5};
  EXPECT_THROW(bad.Validate(), Error);
  bad = {};
  bad.centers = {{40.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}};
  EXPECT_THROW(bad.Validate(), Error);
  bad = {};
  bad.widths = {1.0, 0.0, 1.0};
  EXPECT_THROW(bad.Validate(), Error);
}

}  // namespace
}  // namespace stsep
