#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "conflux/error.hpp"
#include "conflux/text.hpp"

namespace conflux {

using CellId = std::int64_t;

struct GridCell {
  CellId cell_id = 0;
  double lat = 0.0;  // centroid, decimal degrees
  double lon = 0.0;
};

struct CellMonthRecord {
  CellId cell_id = 0;
  int month_index = 0;
  std::int64_t fatalities = 0;
  double magnitude = 0.0;
  int target = 0;

  friend bool operator==(const CellMonthRecord&, const CellMonthRecord&) = default;
};

// Dense per-cell series over contiguous months.
struct Timeline {
  CellId cell_id = 0;
  std::vector<int> months;
  std::vector<double> values;
};

// Inclusive month interval.
struct MonthRange {
  int first = 0;
  int last = -1;

  bool empty() const { return last < first; }
  int size() const { return empty() ? 0 : last - first + 1; }
  bool contains(int m) const { return m >= first && m <= last; }
  friend bool operator==(const MonthRange&, const MonthRange&) = default;
};

struct SplitSpec {
  MonthRange train{0, 299};
  MonthRange validation{300, 335};
  MonthRange test{336, 371};

  MonthRange window() const { return {train.first, test.last}; }
  // Months the final forecast may condition on.
  MonthRange history() const { return {train.first, validation.last}; }

  void validate() const {
    if (train.empty() || validation.empty() || test.empty())
      throw DataError("split ranges must be non-empty");
    if (train.first < 0) throw DataError("split ranges must start at month >= 0");
    if (!(train.last < validation.first && validation.last < test.first))
      throw DataError("split ranges must be disjoint and ordered train < validation < test");
  }
};

struct EventData {
  std::vector<CellMonthRecord> records;
  std::vector<GridCell> cells;  // sorted by cell_id
};

// ln(1 + fatalities): 0 stays 0 and the map is strictly increasing and concave.
inline double magnitude_transform(std::int64_t fatalities) {
  return std::log1p(static_cast<double>(fatalities));
}

inline int binary_target(std::int64_t fatalities) { return fatalities > 0 ? 1 : 0; }

inline CellMonthRecord make_record(CellId cell, int month, std::int64_t fatalities) {
  if (fatalities < 0) throw DataError("negative fatalities");
  return {cell, month, fatalities, magnitude_transform(fatalities), binary_target(fatalities)};
}

inline constexpr std::string_view kEventHeader = "cell_id,month_index,lat,lon,fatalities";

// Parses the event CSV. Line numbers in messages are 1-based and count the
// header. When `window` is given, months outside it are rejected.
inline EventData parse_events(std::istream& in, std::optional<MonthRange> window = std::nullopt) {
  EventData data;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::map<std::pair<CellId, int>, std::size_t> seen;
  std::map<CellId, std::pair<GridCell, std::size_t>> cells;

  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    if (!saw_header) {
      saw_header = true;
      if (body != kEventHeader)
        throw DataError("line " + std::to_string(line_no) + ": expected header '" +
                        std::string(kEventHeader) + "'");
      continue;
    }
    const auto fields = text::split(body, ',');
    auto fail = [&](const std::string& what) {
      return DataError("line " + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() != 5) throw fail("expected 5 fields, got " + std::to_string(fields.size()));
    CellId cell = 0;
    int month = 0;
    double lat = 0, lon = 0;
    std::int64_t fatalities = 0;
    if (!text::parse_number(fields[0], cell)) throw fail("bad cell_id");
    if (!text::parse_number(fields[1], month)) throw fail("bad month_index");
    if (!text::parse_number(fields[2], lat) || !std::isfinite(lat)) throw fail("bad lat");
    if (!text::parse_number(fields[3], lon) || !std::isfinite(lon)) throw fail("bad lon");
    if (!text::parse_number(fields[4], fatalities)) throw fail("bad fatalities");
    if (fatalities < 0) throw fail("negative fatalities");
    if (month < 0) throw fail("negative month_index");
    if (lat < -90.0 || lat > 90.0) throw fail("lat out of range");
    if (lon < -180.0 || lon > 180.0) throw fail("lon out of range");
    if (window && !window->contains(month))
      throw fail("month_index " + std::to_string(month) + " outside window [" +
                 std::to_string(window->first) + "," + std::to_string(window->last) + "]");

    auto [it, inserted] = seen.emplace(std::make_pair(cell, month), line_no);
    if (!inserted)
      throw fail("duplicate (cell_id " + std::to_string(cell) + ", month_index " +
                 std::to_string(month) + "), first seen on line " + std::to_string(it->second));

    auto [cit, fresh] = cells.emplace(cell, std::make_pair(GridCell{cell, lat, lon}, line_no));
    if (!fresh && (cit->second.first.lat != lat || cit->second.first.lon != lon))
      throw fail("centroid of cell " + std::to_string(cell) + " differs from line " +
                 std::to_string(cit->second.second));

    data.records.push_back(make_record(cell, month, fatalities));
  }
  data.cells.reserve(cells.size());
  for (auto& [id, entry] : cells) data.cells.push_back(entry.first);
  return data;
}

inline EventData ingest_events(const std::string& path, std::optional<MonthRange> window = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file '" + path + "'");
  return parse_events(in, window);
}

// Writes records in their stored order; parse_events reproduces them exactly.
inline void write_events(std::ostream& out, const EventData& data) {
  std::unordered_map<CellId, const GridCell*> by_id;
  for (const auto& c : data.cells) by_id[c.cell_id] = &c;
  out << kEventHeader << '\n';
  for (const auto& r : data.records) {
    auto it = by_id.find(r.cell_id);
    if (it == by_id.end()) throw DataError("record references unknown cell " + std::to_string(r.cell_id));
    out << r.cell_id << ',' << r.month_index << ',' << text::format_double(it->second->lat) << ','
        << text::format_double(it->second->lon) << ',' << r.fatalities << '\n';
  }
}

// One zero-filled magnitude timeline per cell, in cell_id order.
inline std::vector<Timeline> build_timelines(const std::vector<CellMonthRecord>& records,
                                             const std::vector<GridCell>& cells, MonthRange window) {
  std::unordered_map<CellId, std::size_t> index;
  std::vector<GridCell> sorted = cells;
  std::sort(sorted.begin(), sorted.end(),
            [](const GridCell& a, const GridCell& b) { return a.cell_id < b.cell_id; });
  std::vector<Timeline> out(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    index[sorted[i].cell_id] = i;
    out[i].cell_id = sorted[i].cell_id;
    out[i].months.resize(static_cast<std::size_t>(window.size()));
    for (int k = 0; k < window.size(); ++k) out[i].months[static_cast<std::size_t>(k)] = window.first + k;
    out[i].values.assign(static_cast<std::size_t>(window.size()), 0.0);
  }
  for (const auto& r : records) {
    auto it = index.find(r.cell_id);
    if (it == index.end()) throw DataError("record references unknown cell " + std::to_string(r.cell_id));
    if (!window.contains(r.month_index))
      throw DataError("record month " + std::to_string(r.month_index) + " outside timeline window");
    out[it->second].values[static_cast<std::size_t>(r.month_index - window.first)] = r.magnitude;
  }
  return out;
}

// Restricts a timeline to the months inside `range`.
inline Timeline slice(const Timeline& t, MonthRange range) {
  Timeline out{t.cell_id, {}, {}};
  for (std::size_t i = 0; i < t.months.size(); ++i) {
    if (range.contains(t.months[i])) {
      out.months.push_back(t.months[i]);
      out.values.push_back(t.values[i]);
    }
  }
  return out;
}

// True when some run of `window_months` consecutive entries holds at least
// `min_conflict_months` positive values.
inline bool has_conflict_spell(const Timeline& t, int min_conflict_months, int window_months) {
  const auto n = t.values.size();
  const auto w = static_cast<std::size_t>(window_months);
  if (w > n) throw DataError("selection window longer than timeline");
  int count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    count += t.values[i] > 0.0 ? 1 : 0;
    if (i >= w) count -= t.values[i - w] > 0.0 ? 1 : 0;
    if (i + 1 >= w && count >= min_conflict_months) return true;
  }
  return false;
}

// Timelines passed here should already be restricted to training months.
inline std::vector<Timeline> select_training_timelines(const std::vector<Timeline>& timelines,
                                                       int min_conflict_months = 8,
                                                       int window_months = 12) {
  std::vector<Timeline> kept;
  for (const auto& t : timelines)
    if (has_conflict_spell(t, min_conflict_months, window_months)) kept.push_back(t);
  return kept;
}

// The n highest-magnitude records of one month; ties by ascending cell_id.
inline std::vector<CellMonthRecord> select_spatial_subset(std::vector<CellMonthRecord> month_records,
                                                          int n = 60) {
  if (n < 1) throw DataError("spatial subset size must be >= 1");
  std::sort(month_records.begin(), month_records.end(),
            [](const CellMonthRecord& a, const CellMonthRecord& b) {
              if (a.magnitude != b.magnitude) return a.magnitude > b.magnitude;
              return a.cell_id < b.cell_id;
            });
  if (month_records.size() > static_cast<std::size_t>(n)) month_records.resize(static_cast<std::size_t>(n));
  return month_records;
}

// Parses "a..b" into an inclusive range.
inline MonthRange parse_month_range(std::string_view s) {
  s = text::trim(s);
  const auto dots = s.find("..");
  MonthRange r;
  if (dots == std::string_view::npos || !text::parse_number(s.substr(0, dots), r.first) ||
      !text::parse_number(s.substr(dots + 2), r.last) || r.last < r.first)
    throw DataError("bad month range '" + std::string(s) + "', expected FIRST..LAST");
  return r;
}

inline std::string format_month_range(MonthRange r) {
  return std::to_string(r.first) + ".." + std::to_string(r.last);
}

inline SplitSpec parse_split_spec(std::istream& in) {
  SplitSpec spec;
  bool have_train = false, have_val = false, have_test = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = text::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw DataError("split line " + std::to_string(line_no) + ": expected key=value");
    const auto key = text::trim(body.substr(0, eq));
    const auto value = body.substr(eq + 1);
    try {
      if (key == "train") {
        spec.train = parse_month_range(value);
        have_train = true;
      } else if (key == "validation") {
        spec.validation = parse_month_range(value);
        have_val = true;
      } else if (key == "test") {
        spec.test = parse_month_range(value);
        have_test = true;
      } else {
        throw DataError("unknown key '" + std::string(key) + "'");
      }
    } catch (const DataError& e) {
      throw DataError("split line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!(have_train && have_val && have_test))
    throw DataError("split file must define train, validation and test");
  spec.validate();
  return spec;
}

inline SplitSpec load_split_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file '" + path + "'");
  return parse_split_spec(in);
}

inline void write_split_spec(std::ostream& out, const SplitSpec& s) {
  out << "train=" << format_month_range(s.train) << '\n'
      << "validation=" << format_month_range(s.validation) << '\n'
      << "test=" << format_month_range(s.test) << '\n';
}

}  // namespace conflux
