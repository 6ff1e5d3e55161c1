#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "conflux/features.hpp"

using namespace conflux;

namespace {

TrendSurface surface(CellId id, int months, double scale) {
  TrendSurface s;
  s.cell_id = id;
  for (int m = 0; m < months; ++m) {
    s.months.push_back(m);
    s.mu_long.push_back(scale * 0.1 * m);
    s.mu_short.push_back(scale * std::sin(m + static_cast<double>(id)));
    s.mu_full.push_back(s.mu_long.back() + s.mu_short.back());
    s.sigma.push_back(0.1);
  }
  return s;
}

}  // namespace

TEST(Slope, Stencils) {
  EXPECT_EQ(derive_slope(std::vector<double>{1, 2, 3, 4}), (std::vector<double>{1, 1, 1, 1}));
  EXPECT_EQ(derive_slope(std::vector<double>{0, 1, 4, 9}), (std::vector<double>{1, 2, 4, 5}));
  EXPECT_EQ(derive_slope(std::vector<double>(5, 3.5)), std::vector<double>(5, 0.0));
  EXPECT_THROW(derive_slope(std::vector<double>{1}), DataError);
}

TEST(Acceleration, Stencils) {
  EXPECT_EQ(derive_acceleration(std::vector<double>{2, 4, 6, 8, 10}), std::vector<double>(5, 0.0));
  EXPECT_EQ(derive_acceleration(std::vector<double>(4, 1.0)), std::vector<double>(4, 0.0));
  // Slope twice on t^2: exact 2 two or more steps from either end.
  const auto a = derive_acceleration(std::vector<double>{0, 1, 4, 9, 16, 25, 36});
  for (std::size_t i = 2; i + 2 < a.size(); ++i) EXPECT_DOUBLE_EQ(a[i], 2.0);
  EXPECT_EQ(derive_acceleration(std::vector<double>{0, 1, 4, 9, 16}), (std::vector<double>{1, 1.5, 2, 1.5, 1}));
  EXPECT_THROW(derive_acceleration(std::vector<double>{1, 2}), DataError);
}

TEST(CumulativeMass, Definition) {
  EXPECT_EQ(cumulative_mass(std::vector<double>{0, 0, 0}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(cumulative_mass(std::vector<double>{1, 2, 3}), (std::vector<double>{1, 3, 6}));
  EXPECT_THROW(cumulative_mass(std::vector<double>{}), DataError);
}

TEST(CumulativeMass, SlopeRecoversInteriorValues) {
  std::vector<double> c(20, 0.7);
  const auto back = derive_slope(cumulative_mass(c));
  for (std::size_t i = 1; i + 1 < back.size(); ++i) EXPECT_NEAR(back[i], 0.7, 1e-12);
  std::vector<double> smooth(50);
  for (std::size_t i = 0; i < smooth.size(); ++i) smooth[i] = std::sin(0.1 * static_cast<double>(i));
  const auto s = derive_slope(cumulative_mass(smooth));
  for (std::size_t i = 1; i + 1 < s.size(); ++i) EXPECT_NEAR(s[i], smooth[i], 0.1);
}

TEST(Assemble, AllColumnsAndCanonicalNames) {
  std::vector<TrendSurface> tce{surface(3, 10, 1.0), surface(1, 10, 2.0)};
  std::vector<TsceSurface> tsce{surface(1, 10, 0.5), surface(3, 10, 0.25)};
  const auto fm = assemble_features(tce, tsce);
  ASSERT_EQ(fm.names.size(), kFeatureCount);
  EXPECT_EQ(fm.rows(), 20u);
  EXPECT_EQ(fm.cell_ids.front(), 1);
  EXPECT_EQ(fm.names[fm.column_index("mu_tce")], "mu_tce");
  EXPECT_NO_THROW(fm.column_index("M_tsce_long"));
  EXPECT_NO_THROW(fm.column_index("d2mu_tsce_short"));
  for (const auto& col : fm.columns) {
    ASSERT_EQ(col.size(), 20u);
    for (double v : col) EXPECT_TRUE(std::isfinite(v));
  }
  // mass column ends with the sum of the level column per cell
  const auto& mu = fm.columns[fm.column_index("mu_tce")];
  const auto& mass = fm.columns[fm.column_index("M_tce")];
  double sum = 0.0;
  for (std::size_t i = 0; i < 10; ++i) sum += mu[i];
  EXPECT_NEAR(mass[9], sum, 1e-12);
}

TEST(Assemble, PermutationInvariant) {
  std::vector<TrendSurface> tce{surface(1, 8, 1.0), surface(2, 8, 1.5), surface(3, 8, 0.5)};
  std::vector<TsceSurface> tsce{surface(1, 8, 0.1), surface(2, 8, 0.2), surface(3, 8, 0.3)};
  const auto a = assemble_features(tce, tsce);
  std::reverse(tce.begin(), tce.end());
  std::rotate(tsce.begin(), tsce.begin() + 1, tsce.end());
  const auto b = assemble_features(tce, tsce);
  EXPECT_EQ(a.cell_ids, b.cell_ids);
  EXPECT_EQ(a.columns, b.columns);
}

TEST(Assemble, MismatchListsKeys) {
  std::vector<TrendSurface> tce{surface(1, 8, 1.0), surface(2, 8, 1.0)};
  std::vector<TsceSurface> tsce{surface(1, 8, 1.0)};
  try {
    assemble_features(tce, tsce);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cell 2"), std::string::npos);
  }
  std::vector<TsceSurface> shorter{surface(1, 7, 1.0), surface(2, 8, 1.0)};
  EXPECT_THROW(assemble_features(tce, shorter), DataError);
}

TEST(Features, CsvRoundTrip) {
  const auto fm = assemble_features({surface(4, 6, 1.0)}, {surface(4, 6, 2.0)});
  std::stringstream io;
  write_features(io, fm);
  const auto back = read_features(io);
  EXPECT_EQ(back.names, fm.names);
  EXPECT_EQ(back.cell_ids, fm.cell_ids);
  EXPECT_EQ(back.months, fm.months);
  EXPECT_EQ(back.columns, fm.columns);
}

TEST(Features, AlignTargetsAndRowRanges) {
  const auto fm = assemble_features({surface(4, 6, 1.0)}, {surface(4, 6, 2.0)});
  const auto y = align_targets(fm, {make_record(4, 2, 5), make_record(4, 3, 0)});
  EXPECT_EQ(y, (std::vector<int>{0, 0, 1, 0, 0, 0}));
  EXPECT_EQ(fm.rows_in({2, 3}).size(), 2u);
}
