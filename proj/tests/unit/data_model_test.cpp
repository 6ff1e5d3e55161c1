#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "conflux/data_model.hpp"

using namespace conflux;

namespace {

EventData parse(const std::string& s, std::optional<MonthRange> w = std::nullopt) {
  std::istringstream in(s);
  return parse_events(in, w);
}

Timeline make_timeline(std::vector<double> values) {
  Timeline t{7, {}, std::move(values)};
  for (std::size_t i = 0; i < t.values.size(); ++i) t.months.push_back(static_cast<int>(i));
  return t;
}

}  // namespace

TEST(Ingest, MapsFieldsDirectly) {
  const auto d = parse("cell_id,month_index,lat,lon,fatalities\n1001,4,-3.25,27.75,12\n");
  ASSERT_EQ(d.records.size(), 1u);
  EXPECT_EQ(d.records[0].cell_id, 1001);
  EXPECT_EQ(d.records[0].month_index, 4);
  EXPECT_EQ(d.records[0].fatalities, 12);
  EXPECT_EQ(d.records[0].target, 1);
  ASSERT_EQ(d.cells.size(), 1u);
  EXPECT_DOUBLE_EQ(d.cells[0].lat, -3.25);
  EXPECT_DOUBLE_EQ(d.cells[0].lon, 27.75);
}

TEST(Ingest, EmptyFile) {
  EXPECT_TRUE(parse("").records.empty());
  const auto d = parse("cell_id,month_index,lat,lon,fatalities\n");
  EXPECT_TRUE(d.records.empty());
  EXPECT_TRUE(d.cells.empty());
}

TEST(Ingest, DuplicateNamesBothRows) {
  try {
    parse("cell_id,month_index,lat,lon,fatalities\n1,0,0,0,1\n2,0,0,1,0\n1,0,0,0,3\n");
    FAIL() << "expected duplicate error";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 4"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
  }
}

TEST(Ingest, RejectsBadRows) {
  const std::string h = "cell_id,month_index,lat,lon,fatalities\n";
  EXPECT_THROW(parse(h + "1,0,0,0,-1\n"), DataError);
  EXPECT_THROW(parse(h + "1,0,0,0\n"), DataError);
  EXPECT_THROW(parse(h + "1,x,0,0,1\n"), DataError);
  EXPECT_THROW(parse(h + "1,0,91,0,1\n"), DataError);
  EXPECT_THROW(parse("cell,month\n"), DataError);
  EXPECT_THROW(parse(h + "1,0,0,0,1\n1,1,0.5,0,1\n"), DataError);  // centroid moved
  EXPECT_THROW(parse(h + "1,40,0,0,1\n", MonthRange{0, 35}), DataError);
  try {
    parse(h + "1,0,0,0,1\n1,1,0,0,oops\n");
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Ingest, RoundTripIsIdentity) {
  std::mt19937 rng(3);
  EventData d;
  for (int c = 0; c < 12; ++c) d.cells.push_back({c * 3 + 1, -10.25 + 0.5 * c, 20.75 - 0.5 * c});
  for (int c = 0; c < 12; ++c)
    for (int m = 0; m < 30; ++m)
      if (rng() % 3 == 0) d.records.push_back(make_record(c * 3 + 1, m, static_cast<std::int64_t>(rng() % 500)));
  std::ostringstream out;
  write_events(out, d);
  const auto back = parse(out.str());
  EXPECT_EQ(back.records, d.records);
  ASSERT_EQ(back.cells.size(), d.cells.size());
}

TEST(MagnitudeTransform, Values) {
  EXPECT_EQ(magnitude_transform(0), 0.0);
  EXPECT_NEAR(magnitude_transform(99), 4.60517, 1e-5);
  EXPECT_LT(magnitude_transform(1000), magnitude_transform(1100));
  EXPECT_GT(magnitude_transform(100) - magnitude_transform(0), magnitude_transform(1100) - magnitude_transform(1000));
}

TEST(BinaryTarget, Values) {
  EXPECT_EQ(binary_target(0), 0);
  EXPECT_EQ(binary_target(5), 1);
  EXPECT_EQ(binary_target(1), 1);
}

TEST(BuildTimelines, ZeroFill) {
  std::vector<GridCell> cells{{1, 0, 0}, {2, 0, 0.5}};
  std::vector<CellMonthRecord> recs{make_record(1, 2, 3), make_record(1, 5, 10)};
  const auto tl = build_timelines(recs, cells, {0, 5});
  ASSERT_EQ(tl.size(), 2u);
  for (std::size_t i = 0; i < 6; ++i) {
    if (i == 2 || i == 5) EXPECT_GT(tl[0].values[i], 0.0);
    else EXPECT_EQ(tl[0].values[i], 0.0);
    EXPECT_EQ(tl[1].values[i], 0.0);
  }
  EXPECT_THROW(build_timelines({make_record(9, 0, 1)}, cells, {0, 5}), DataError);
}

TEST(BuildTimelines, ReplicationWindowLength) {
  std::vector<GridCell> cells{{1, 0, 0}, {2, 0, 0.5}, {3, 0.5, 0}};
  const auto tl = build_timelines({make_record(3, 17, 2)}, cells, {0, 299});
  for (const auto& t : tl) {
    EXPECT_EQ(t.values.size(), 300u);
    EXPECT_EQ(t.months.size(), 300u);
  }
}

TEST(BuildTimelines, TargetsMatchPositiveMagnitude) {
  std::mt19937 rng(11);
  std::vector<GridCell> cells{{1, 0, 0}, {2, 0, 0.5}};
  std::vector<CellMonthRecord> recs;
  for (CellId c : {1, 2})
    for (int m = 0; m < 40; ++m) recs.push_back(make_record(c, m, rng() % 4 == 0 ? rng() % 50 : 0));
  const auto tl = build_timelines(recs, cells, {0, 39});
  int targets = 0, positive = 0;
  for (const auto& r : recs) targets += r.target;
  for (const auto& t : tl)
    for (double v : t.values) positive += v > 0.0;
  EXPECT_EQ(targets, positive);
}

TEST(SelectTrainingTimelines, EightInsideOneYearKept) {
  std::vector<double> v(40, 0.0);
  for (int m : {10, 11, 13, 14, 16, 18, 20, 21}) v[static_cast<std::size_t>(m)] = 1.0;
  EXPECT_EQ(select_training_timelines({make_timeline(v)}).size(), 1u);
}

TEST(SelectTrainingTimelines, FlatLineDropped) {
  EXPECT_TRUE(select_training_timelines({make_timeline(std::vector<double>(40, 0.0))}).empty());
}

// Brute-force window count, independent of the sliding implementation.
TEST(SelectTrainingTimelines, SpreadOutDroppedAndMatchesBruteForce) {
  std::vector<double> spread(40, 0.0);
  for (int m = 0; m < 8; ++m) spread[static_cast<std::size_t>(m * 4)] = 2.0;  // 8 months over 29
  EXPECT_TRUE(select_training_timelines({make_timeline(spread)}).empty());

  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(30);
    for (auto& x : v) x = rng() % 3 == 0 ? 1.0 : 0.0;
    bool brute = false;
    for (std::size_t s = 0; s + 12 <= v.size(); ++s) {
      int c = 0;
      for (std::size_t k = s; k < s + 12; ++k) c += v[k] > 0;
      brute = brute || c >= 8;
    }
    EXPECT_EQ(select_training_timelines({make_timeline(v)}).size() == 1, brute);
  }
}

TEST(SelectTrainingTimelines, MonotoneInThreshold) {
  std::mt19937 rng(9);
  std::vector<Timeline> tl;
  for (int i = 0; i < 60; ++i) {
    std::vector<double> v(36);
    for (auto& x : v) x = rng() % 2 ? 1.0 : 0.0;
    tl.push_back(make_timeline(v));
  }
  std::size_t prev = 0;
  for (int k = 12; k >= 1; --k) {
    const auto n = select_training_timelines(tl, k).size();
    EXPECT_GE(n, prev);
    prev = n;
  }
}

TEST(SpatialSubset, FewerThanN) {
  std::vector<CellMonthRecord> m{make_record(3, 0, 1), make_record(1, 0, 0), make_record(2, 0, 5)};
  EXPECT_EQ(select_spatial_subset(m, 60).size(), 3u);
}

TEST(SpatialSubset, ConflictCellsThenZeroTieBreak) {
  std::vector<CellMonthRecord> m;
  for (CellId c = 100; c >= 1; --c) m.push_back(make_record(c, 0, c % 10 == 0 ? c : 0));
  const auto s = select_spatial_subset(m, 60);
  ASSERT_EQ(s.size(), 60u);
  // Brute force: sort all by (-magnitude, id) and take 60.
  auto all = m;
  std::sort(all.begin(), all.end(), [](auto& a, auto& b) {
    return std::make_pair(-a.magnitude, a.cell_id) < std::make_pair(-b.magnitude, b.cell_id);
  });
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(s[i].cell_id, all[i].cell_id);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(s[i].cell_id % 10, 0);
  for (std::size_t i = 10; i < 60; ++i) EXPECT_EQ(s[i].magnitude, 0.0);
  EXPECT_EQ(s[10].cell_id, 1);
}

TEST(SpatialSubset, EqualMagnitudeAtCutoffPrefersLowerId) {
  std::vector<CellMonthRecord> m{make_record(9, 0, 4), make_record(5, 0, 4), make_record(1, 0, 20)};
  const auto s = select_spatial_subset(m, 2);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].cell_id, 5);
}

TEST(SplitSpec, ParsesAndValidates) {
  std::istringstream in("train=0..299\nvalidation=300..335\ntest=336..371\n");
  const auto s = parse_split_spec(in);
  EXPECT_EQ(s.train, (MonthRange{0, 299}));
  EXPECT_EQ(s.test.size(), 36);
  std::istringstream overlap("train=0..10\nvalidation=10..12\ntest=13..20\n");
  EXPECT_THROW(parse_split_spec(overlap), DataError);
  std::istringstream bad("train=0..10\nvalidation=11..12\ntest=oops\n");
  EXPECT_THROW(parse_split_spec(bad), DataError);
}
