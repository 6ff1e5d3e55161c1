#pragma once

#include <algorithm>
#include <array>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "conflux/data_model.hpp"
#include "conflux/error.hpp"
#include "conflux/exposure_temporal.hpp"
#include "conflux/text.hpp"

namespace conflux {

inline constexpr std::size_t kFeatureCount = 24;

// {full, short, long} x {level, slope, acceleration, cumulative} x {TCE, TSCE}.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "mu_tce",        "dmu_tce",        "d2mu_tce",        "M_tce",
    "mu_tce_short",  "dmu_tce_short",  "d2mu_tce_short",  "M_tce_short",
    "mu_tce_long",   "dmu_tce_long",   "d2mu_tce_long",   "M_tce_long",
    "mu_tsce",       "dmu_tsce",       "d2mu_tsce",       "M_tsce",
    "mu_tsce_short", "dmu_tsce_short", "d2mu_tsce_short", "M_tsce_short",
    "mu_tsce_long",  "dmu_tsce_long",  "d2mu_tsce_long",  "M_tsce_long",
};

// Unit-spacing finite differences: central inside, one-sided at both ends.
inline std::vector<double> derive_slope(std::span<const double> mu) {
  const std::size_t n = mu.size();
  if (n < 2) throw DataError("slope needs at least two values");
  std::vector<double> d(n);
  d[0] = mu[1] - mu[0];
  d[n - 1] = mu[n - 1] - mu[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = 0.5 * (mu[i + 1] - mu[i - 1]);
  return d;
}

inline std::vector<double> derive_acceleration(std::span<const double> mu) {
  if (mu.size() < 3) throw DataError("acceleration needs at least three values");
  const auto slope = derive_slope(mu);
  return derive_slope(slope);
}

inline std::vector<double> cumulative_mass(std::span<const double> mu) {
  if (mu.empty()) throw DataError("cumulative mass of an empty series");
  std::vector<double> m(mu.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) m[i] = acc += mu[i];
  return m;
}

// Column-major table keyed by (cell_id, month_index), rows sorted by key.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<CellId> cell_ids;
  std::vector<int> months;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return cell_ids.size(); }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw DataError("unknown feature '" + std::string(name) + "'");
  }

  std::vector<std::size_t> rows_in(MonthRange range) const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < rows(); ++i)
      if (range.contains(months[i])) r.push_back(i);
    return r;
  }

  // Dense (rows x features) matrix for model training or prediction.
  Eigen::MatrixXd gather(std::span<const std::size_t> row_idx, std::span<const std::size_t> col_idx) const {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(row_idx.size()), static_cast<Eigen::Index>(col_idx.size()));
    for (std::size_t c = 0; c < col_idx.size(); ++c) {
      const auto& col = columns.at(col_idx[c]);
      for (std::size_t r = 0; r < row_idx.size(); ++r)
        X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = col[row_idx[r]];
    }
    return X;
  }
};

namespace detail {

inline void append_trend_features(std::vector<std::vector<double>>& cols, std::size_t offset,
                                  const std::vector<double>& mu) {
  const auto slope = derive_slope(mu);
  const auto accel = derive_slope(slope);
  const auto mass = cumulative_mass(mu);
  auto push = [&](std::size_t k, const std::vector<double>& v) {
    cols[offset + k].insert(cols[offset + k].end(), v.begin(), v.end());
  };
  push(0, mu);
  push(1, slope);
  push(2, accel);
  push(3, mass);
}

}  // namespace detail

// The 24 exposure features for every (cell, month) covered by both surface sets.
inline FeatureMatrix assemble_features(const std::vector<TrendSurface>& tce, const std::vector<TsceSurface>& tsce) {
  std::map<CellId, const TrendSurface*> a, b;
  for (const auto& s : tce) a[s.cell_id] = &s;
  for (const auto& s : tsce) b[s.cell_id] = &s;

  std::vector<std::string> missing;
  for (const auto& [id, s] : a)
    if (!b.count(id)) missing.push_back("cell " + std::to_string(id) + " (no TSCE surface)");
  for (const auto& [id, s] : b)
    if (!a.count(id)) missing.push_back("cell " + std::to_string(id) + " (no TCE surface)");
  for (const auto& [id, s] : a) {
    auto it = b.find(id);
    if (it != b.end() && it->second->months != s->months)
      missing.push_back("cell " + std::to_string(id) + " (months differ between TCE and TSCE)");
  }
  if (!missing.empty()) {
    std::string msg = "surface mismatch:";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i] + ";";
    if (missing.size() > 10) msg += " ... " + std::to_string(missing.size() - 10) + " more";
    throw DataError(msg);
  }

  FeatureMatrix fm;
  fm.names.assign(kFeatureNames.begin(), kFeatureNames.end());
  fm.columns.assign(kFeatureCount, {});
  for (const auto& [id, s] : a) {
    const auto* t = b.at(id);
    if (s->months.size() < 3) throw DataError("surfaces need at least three months for features");
    for (int m : s->months) {
      fm.cell_ids.push_back(id);
      fm.months.push_back(m);
    }
    detail::append_trend_features(fm.columns, 0, s->mu_full);
    detail::append_trend_features(fm.columns, 4, s->mu_short);
    detail::append_trend_features(fm.columns, 8, s->mu_long);
    detail::append_trend_features(fm.columns, 12, t->mu_full);
    detail::append_trend_features(fm.columns, 16, t->mu_short);
    detail::append_trend_features(fm.columns, 20, t->mu_long);
  }
  return fm;
}

// Binary targets aligned with the matrix rows; rows without a record are 0.
inline std::vector<int> align_targets(const FeatureMatrix& fm, const std::vector<CellMonthRecord>& records) {
  std::map<std::pair<CellId, int>, int> lookup;
  for (const auto& r : records) lookup[{r.cell_id, r.month_index}] = r.target;
  std::vector<int> y(fm.rows(), 0);
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    auto it = lookup.find({fm.cell_ids[i], fm.months[i]});
    if (it != lookup.end()) y[i] = it->second;
  }
  return y;
}

inline void write_features(std::ostream& out, const FeatureMatrix& fm) {
  out << "cell_id,month_index";
  for (const auto& n : fm.names) out << ',' << n;
  out << '\n';
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    out << fm.cell_ids[r] << ',' << fm.months[r];
    for (const auto& col : fm.columns) out << ',' << text::format_double(col[r]);
    out << '\n';
  }
}

inline FeatureMatrix read_features(std::istream& in) {
  FeatureMatrix fm;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    const auto f = text::split(body, ',');
    if (line_no == 1) {
      if (f.size() < 3 || f[0] != "cell_id" || f[1] != "month_index")
        throw DataError("feature file: header must start with cell_id,month_index");
      for (std::size_t i = 2; i < f.size(); ++i) fm.names.emplace_back(f[i]);
      fm.columns.assign(fm.names.size(), {});
      continue;
    }
    if (f.size() != fm.names.size() + 2) throw DataError("feature file line " + std::to_string(line_no) + ": wrong field count");
    CellId cell = 0;
    int month = 0;
    if (!text::parse_number(f[0], cell) || !text::parse_number(f[1], month))
      throw DataError("feature file line " + std::to_string(line_no) + ": bad key");
    fm.cell_ids.push_back(cell);
    fm.months.push_back(month);
    for (std::size_t c = 0; c < fm.names.size(); ++c) {
      double v = 0;
      if (!text::parse_number(f[c + 2], v))
        throw DataError("feature file line " + std::to_string(line_no) + ": bad value");
      fm.columns[c].push_back(v);
    }
  }
  return fm;
}

}  // namespace conflux
