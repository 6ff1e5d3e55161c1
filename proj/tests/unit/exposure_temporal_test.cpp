#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "conflux/exposure_temporal.hpp"

using namespace conflux;

namespace {

gp::GPModel truth() {
  return {{{gp::KernelKind::SquaredExponential, 30.0, 0.8}, {gp::KernelKind::Matern32, 3.0, 0.4}}, 0.2};
}

std::vector<Timeline> sample_timelines(int count, int months, std::uint64_t seed) {
  std::vector<int> ms(static_cast<std::size_t>(months));
  for (int m = 0; m < months; ++m) ms[static_cast<std::size_t>(m)] = m;
  std::vector<Timeline> out;
  for (int k = 0; k < count; ++k) {
    const auto y = gp::sample_prior(truth(), gp::months_as_inputs(ms), derive_seed(seed, static_cast<std::uint64_t>(k)));
    out.push_back({k + 1, ms, std::vector<double>(y.data(), y.data() + y.size())});
  }
  return out;
}

}  // namespace

TEST(Tce, FitRecoversScaleOrder) {
  const auto tl = sample_timelines(12, 90, 3);
  gp::MapOptions opt;
  opt.starts = 3;
  opt.seed = 1;
  const auto fit = fit_tce(tl, {}, opt);
  const auto& m = fit.model;
  EXPECT_GT(m.components[0].lengthscale, m.components[1].lengthscale);
  EXPECT_NEAR(m.noise, 0.2, 0.1);
  EXPECT_NEAR(m.components[0].lengthscale, 30.0, 15.0);
}

TEST(Tce, EmptySubsetIsAnError) {
  EXPECT_THROW(fit_tce({}), DataError);
}

TEST(Tce, ExtrapolationShapeAndDecomposition) {
  const auto tl = sample_timelines(1, 80, 5);
  const auto s = extrapolate_tce(tl[0], truth(), 24);
  ASSERT_EQ(s.months.size(), 104u);
  EXPECT_EQ(s.months.back(), 103);
  for (std::size_t i = 0; i < s.months.size(); ++i) {
    EXPECT_NEAR(s.mu_long[i] + s.mu_short[i], s.mu_full[i], 1e-10);
    EXPECT_GE(s.sigma[i], 0.0);
  }
  // Uncertainty grows into the horizon and the short trend fades first.
  EXPECT_GT(s.sigma.back(), s.sigma[79]);
  EXPECT_LT(std::abs(s.mu_short.back()), 1e-3);
  EXPECT_DOUBLE_EQ(s.lengthscale_long, 30.0);
}

TEST(Tce, AllZeroTimelineStaysZero) {
  Timeline t{9, {}, std::vector<double>(40, 0.0)};
  for (int m = 0; m < 40; ++m) t.months.push_back(m);
  const auto s = extrapolate_tce(t, truth(), 6);
  for (double v : s.mu_full) EXPECT_EQ(v, 0.0);
}

TEST(Tce, ExtrapolateAllMatchesSingle) {
  auto tl = sample_timelines(5, 50, 8);
  tl[2].months.pop_back();
  tl[2].values.pop_back();
  const auto all = extrapolate_all(tl, truth(), 10, 2);
  ASSERT_EQ(all.size(), 5u);
  for (std::size_t i = 0; i < tl.size(); ++i) {
    const auto one = extrapolate_tce(tl[i], truth(), 10);
    EXPECT_EQ(all[i].cell_id, tl[i].cell_id);
    ASSERT_EQ(all[i].mu_full.size(), one.mu_full.size());
    for (std::size_t k = 0; k < one.mu_full.size(); ++k) EXPECT_NEAR(all[i].mu_full[k], one.mu_full[k], 1e-12);
  }
}

TEST(Tce, SurfacesCsvRoundTrip) {
  const auto surfaces = extrapolate_all(sample_timelines(3, 30, 2), truth(), 4);
  std::stringstream io;
  write_trend_surfaces(io, surfaces);
  const auto back = read_trend_surfaces(io);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].months, surfaces[i].months);
    EXPECT_EQ(back[i].mu_full, surfaces[i].mu_full);
    EXPECT_EQ(back[i].sigma, surfaces[i].sigma);
  }
  std::istringstream bad("wrong,header\n");
  EXPECT_THROW(read_trend_surfaces(bad), DataError);
}

TEST(Tce, SignalHorizon) {
  EXPECT_DOUBLE_EQ(signal_horizon(12.5), 12.5);
  EXPECT_THROW(signal_horizon(0.0), DataError);
}
