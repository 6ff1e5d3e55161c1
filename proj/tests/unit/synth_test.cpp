#include <sstream>

#include <gtest/gtest.h>

#include "conflux/synth.hpp"

using namespace conflux;

namespace {

SynthConfig small() {
  SynthConfig c;
  c.rows = 6;
  c.cols = 5;
  c.months = 60;
  c.seed = 12;
  return c;
}

}  // namespace

TEST(Synth, DeterministicForSeed) {
  const auto a = generate(small());
  const auto b = generate(small());
  EXPECT_EQ(a.events.records, b.events.records);
  auto other = small();
  other.seed = 13;
  EXPECT_NE(generate(other).events.records, a.events.records);
}

TEST(Synth, GridAndRecordShape) {
  const auto d = generate(small());
  ASSERT_EQ(d.events.cells.size(), 30u);
  EXPECT_EQ(d.events.records.size(), 30u * 60u);
  EXPECT_EQ(d.events.cells[0].cell_id, 1);
  EXPECT_DOUBLE_EQ(d.events.cells[0].lat, 0.25);
  EXPECT_DOUBLE_EQ(d.events.cells[6].lon, 0.75);
  EXPECT_EQ(d.truth.latent.rows(), 30);
  EXPECT_EQ(d.truth.latent.cols(), 60);
  EXPECT_GE(d.truth.latent.minCoeff(), 0.0);
  for (const auto& r : d.events.records) {
    EXPECT_GE(r.fatalities, 0);
    EXPECT_EQ(r.target, r.fatalities > 0 ? 1 : 0);
  }
}

TEST(Synth, DefaultBaseRateIsSparse) {
  SynthConfig c;
  c.rows = 10;
  c.cols = 10;
  c.months = 120;
  const auto d = generate(c);
  double pos = 0;
  for (const auto& r : d.events.records) pos += r.target;
  const double rate = pos / static_cast<double>(d.events.records.size());
  EXPECT_GT(rate, 0.01);
  EXPECT_LT(rate, 0.25);
}

TEST(Synth, NeighboursCorrelate) {
  SynthConfig c = small();
  c.rows = 8;
  c.cols = 8;
  c.months = 100;
  const auto d = generate(c);
  const auto& L = d.truth.trend_long;
  // adjacent columns in the same row vs. opposite corners
  auto corr = [&](Eigen::Index a, Eigen::Index b) {
    const Eigen::VectorXd x = L.row(a).transpose().array() - L.row(a).mean();
    const Eigen::VectorXd y = L.row(b).transpose().array() - L.row(b).mean();
    return x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
  };
  EXPECT_GT(corr(0, 1), corr(0, 63));
}

TEST(Synth, RejectsBadConfig) {
  auto c = small();
  c.rows = 1;
  EXPECT_THROW(generate(c), DataError);
  c = small();
  c.noise = -1;
  EXPECT_THROW(generate(c), DataError);
  c = small();
  c.origin_lat = 89.0;
  EXPECT_THROW(generate(c), DataError);
}

TEST(Synth, EventsRoundTripThroughCsv) {
  const auto d = generate(small());
  std::stringstream io;
  write_events(io, d.events);
  const auto back = parse_events(io);
  EXPECT_EQ(back.records, d.events.records);
}
