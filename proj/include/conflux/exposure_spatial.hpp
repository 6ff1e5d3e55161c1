#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "conflux/data_model.hpp"
#include "conflux/exposure_temporal.hpp"
#include "conflux/gp/map_estimate.hpp"
#include "conflux/gp/posterior.hpp"
#include "conflux/parallel.hpp"
#include "conflux/text.hpp"

namespace conflux {

// Spatial conflict exposure of every grid cell in one month.
struct SpatialSurface {
  int month_index = 0;
  std::vector<CellId> cell_ids;  // ascending
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct SpatialPriorSpec {
  gp::LogNormalPrior lengthscale{0.0, 1.0};  // degrees; median 1
  gp::LogNormalPrior amplitude{std::log(0.5), 1.5};
  gp::LogNormalPrior noise{std::log(0.5), 1.5};

  gp::HyperPrior hyper_prior() const { return {{lengthscale}, {amplitude}, noise}; }
};

inline gp::GPModel spatial_model_at(const gp::HyperPrior& prior) {
  gp::GPModel m;
  m.components = {{gp::KernelKind::Matern32, std::exp(prior.lengthscale[0].log_mean),
                   std::exp(prior.amplitude[0].log_mean)}};
  m.noise = std::exp(prior.noise.log_mean);
  return m;
}

// Rows are (lon, lat) centroids; distance is Euclidean in decimal degrees.
inline gp::MatrixXd centroid_inputs(const std::vector<GridCell>& cells) {
  gp::MatrixXd X(static_cast<Eigen::Index>(cells.size()), 2);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    X(static_cast<Eigen::Index>(i), 0) = cells[i].lon;
    X(static_cast<Eigen::Index>(i), 1) = cells[i].lat;
  }
  return X;
}

inline std::vector<GridCell> sorted_cells(std::vector<GridCell> cells) {
  std::sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) { return a.cell_id < b.cell_id; });
  return cells;
}

// Records of one month for every cell; cells without a record get zero.
inline std::vector<CellMonthRecord> complete_month(const std::vector<CellMonthRecord>& month_records,
                                                   const std::vector<GridCell>& cells, int month) {
  std::unordered_set<CellId> known;
  for (const auto& c : cells) known.insert(c.cell_id);
  std::unordered_map<CellId, const CellMonthRecord*> present;
  for (const auto& r : month_records) {
    if (!known.count(r.cell_id)) throw DataError("record references unknown cell " + std::to_string(r.cell_id));
    if (r.month_index != month) throw DataError("record from another month passed to a monthly surface");
    present[r.cell_id] = &r;
  }
  std::vector<CellMonthRecord> out;
  out.reserve(cells.size());
  for (const auto& c : cells) {
    auto it = present.find(c.cell_id);
    out.push_back(it != present.end() ? *it->second : make_record(c.cell_id, month, 0));
  }
  return out;
}

namespace detail {

struct SpatialProblem {
  gp::MatrixXd X;
  gp::VectorXd y;
};

inline SpatialProblem subset_problem(const std::vector<CellMonthRecord>& complete,
                                     const std::unordered_map<CellId, const GridCell*>& by_id, int n) {
  const auto subset = select_spatial_subset(complete, n);
  SpatialProblem p;
  p.X.resize(static_cast<Eigen::Index>(subset.size()), 2);
  p.y.resize(static_cast<Eigen::Index>(subset.size()));
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const auto* c = by_id.at(subset[i].cell_id);
    p.X(static_cast<Eigen::Index>(i), 0) = c->lon;
    p.X(static_cast<Eigen::Index>(i), 1) = c->lat;
    p.y[static_cast<Eigen::Index>(i)] = subset[i].magnitude;
  }
  return p;
}

inline std::unordered_map<CellId, const GridCell*> index_cells(const std::vector<GridCell>& cells) {
  std::unordered_map<CellId, const GridCell*> by_id;
  for (const auto& c : cells) by_id[c.cell_id] = &c;
  return by_id;
}

// Records of month `month` read from dense magnitude timelines. Fatality
// counts are recovered from magnitudes only through the target flag.
inline std::vector<CellMonthRecord> records_from_timelines(const std::vector<Timeline>& timelines, int month) {
  std::vector<CellMonthRecord> out;
  out.reserve(timelines.size());
  for (const auto& t : timelines) {
    const auto it = std::lower_bound(t.months.begin(), t.months.end(), month);
    if (it == t.months.end() || *it != month) throw DataError("timeline does not cover month " + std::to_string(month));
    const double mag = t.values[static_cast<std::size_t>(it - t.months.begin())];
    CellMonthRecord r;
    r.cell_id = t.cell_id;
    r.month_index = month;
    r.magnitude = mag;
    r.fatalities = static_cast<std::int64_t>(std::llround(std::expm1(mag)));
    r.target = mag > 0.0 ? 1 : 0;
    out.push_back(r);
  }
  return out;
}

}  // namespace detail

// Per-month top-n subsets of the training months, one regression problem each.
inline std::vector<gp::TrainingSet> spatial_training_sets(const std::vector<Timeline>& timelines,
                                                          const std::vector<GridCell>& cells,
                                                          MonthRange months, int n) {
  const auto sorted = sorted_cells(cells);
  const auto by_id = detail::index_cells(sorted);
  std::vector<gp::TrainingSet> sets;
  for (int m = months.first; m <= months.last; ++m) {
    const auto complete = complete_month(detail::records_from_timelines(timelines, m), sorted, m);
    auto p = detail::subset_problem(complete, by_id, n);
    sets.push_back({std::move(p.X), std::move(p.y)});
  }
  return sets;
}

// One Matern-3/2 (l, eta, eps) shared by all training months.
inline gp::MapFit fit_sce(const std::vector<Timeline>& magnitude_timelines, const std::vector<GridCell>& cells,
                          MonthRange training_months, int subset_size = 60,
                          const SpatialPriorSpec& prior_spec = {}, const gp::MapOptions& options = {}) {
  if (training_months.empty()) throw DataError("fit_sce needs at least one training month");
  const auto prior = prior_spec.hyper_prior();
  const auto sets = spatial_training_sets(magnitude_timelines, cells, training_months, subset_size);
  return gp::map_estimate(spatial_model_at(prior), prior, sets, options);
}

// Posterior mean exposure at all cell centroids, conditioned on that month's
// top-n cells.
inline SpatialSurface estimate_sce_month(const std::vector<CellMonthRecord>& month_records,
                                         const std::vector<GridCell>& cells, const gp::GPModel& model,
                                         int subset_size = 60) {
  if (cells.empty()) throw DataError("no grid cells");
  const auto sorted = sorted_cells(cells);
  const auto by_id = detail::index_cells(sorted);
  const int month = month_records.empty() ? 0 : month_records.front().month_index;
  const auto complete = complete_month(month_records, sorted, month);
  const auto problem = detail::subset_problem(complete, by_id, subset_size);

  SpatialSurface s;
  s.month_index = month;
  for (const auto& c : sorted) s.cell_ids.push_back(c.cell_id);
  const gp::Conditioner cond(model, problem.X, centroid_inputs(sorted));
  s.sigma.assign(cond.sigma().data(), cond.sigma().data() + cond.sigma().size());
  if ((problem.y.array() == 0.0).all()) {
    s.mu.assign(sorted.size(), 0.0);
  } else {
    const auto post = cond.summarize(problem.y);
    s.mu.assign(post.mu_full.data(), post.mu_full.data() + post.mu_full.size());
  }
  return s;
}

inline std::vector<SpatialSurface> estimate_sce(const std::vector<Timeline>& magnitude_timelines,
                                                const std::vector<GridCell>& cells, MonthRange months,
                                                const gp::GPModel& model, int subset_size = 60, int jobs = 1) {
  std::vector<SpatialSurface> out(static_cast<std::size_t>(months.size()));
  parallel_for(out.size(), jobs, [&](std::size_t k) {
    const int m = months.first + static_cast<int>(k);
    out[k] = estimate_sce_month(detail::records_from_timelines(magnitude_timelines, m), cells, model, subset_size);
    out[k].month_index = m;
  });
  return out;
}

// Per-cell timelines of mu_SCE, ordered by cell_id then month.
inline std::vector<Timeline> sce_timelines(const std::vector<SpatialSurface>& surfaces) {
  if (surfaces.empty()) return {};
  std::vector<SpatialSurface const*> ordered;
  for (const auto& s : surfaces) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const SpatialSurface* a, const SpatialSurface* b) { return a->month_index < b->month_index; });
  const auto& ids = ordered.front()->cell_ids;
  std::vector<Timeline> out(ids.size());
  for (std::size_t c = 0; c < ids.size(); ++c) out[c].cell_id = ids[c];
  for (const auto* s : ordered) {
    if (s->cell_ids != ids) throw DataError("spatial surfaces cover different cells");
    for (std::size_t c = 0; c < ids.size(); ++c) {
      out[c].months.push_back(s->month_index);
      out[c].values.push_back(s->mu[c]);
    }
  }
  return out;
}

// Two-trend fit on mu_SCE timelines. The subset is chosen with the same
// conflict-spell rule on the cells' fatality timelines over training months.
inline gp::MapFit fit_tsce(const std::vector<Timeline>& sce_timelines_all,
                           const std::vector<Timeline>& magnitude_timelines, MonthRange training_months,
                           int min_conflict_months = 8, int window_months = 12,
                           const TwoTrendPriorSpec& prior_spec = {}, const gp::MapOptions& options = {}) {
  std::unordered_set<CellId> keep;
  for (const auto& t : magnitude_timelines)
    if (has_conflict_spell(slice(t, training_months), min_conflict_months, window_months)) keep.insert(t.cell_id);
  std::vector<Timeline> subset;
  for (const auto& t : sce_timelines_all)
    if (keep.count(t.cell_id)) subset.push_back(slice(t, training_months));
  return fit_two_trend(subset, prior_spec, options);
}

inline constexpr std::string_view kSpatialHeader = "cell_id,month_index,mu_sce,sigma_sce";

inline void write_spatial_surfaces(std::ostream& out, const std::vector<SpatialSurface>& surfaces) {
  out << kSpatialHeader << '\n';
  for (const auto& s : surfaces)
    for (std::size_t c = 0; c < s.cell_ids.size(); ++c)
      out << s.cell_ids[c] << ',' << s.month_index << ',' << text::format_double(s.mu[c]) << ','
          << text::format_double(s.sigma[c]) << '\n';
}

inline std::vector<SpatialSurface> read_spatial_surfaces(std::istream& in) {
  std::map<int, SpatialSurface> by_month;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    if (line_no == 1) {
      if (body != kSpatialHeader) throw DataError("spatial surface file: unexpected header");
      continue;
    }
    const auto f = text::split(body, ',');
    CellId cell = 0;
    int month = 0;
    double mu = 0, sigma = 0;
    if (f.size() != 4 || !text::parse_number(f[0], cell) || !text::parse_number(f[1], month) ||
        !text::parse_number(f[2], mu) || !text::parse_number(f[3], sigma))
      throw DataError("spatial surface file line " + std::to_string(line_no) + ": malformed row");
    auto& s = by_month[month];
    s.month_index = month;
    s.cell_ids.push_back(cell);
    s.mu.push_back(mu);
    s.sigma.push_back(sigma);
  }
  std::vector<SpatialSurface> out;
  for (auto& [m, s] : by_month) out.push_back(std::move(s));
  return out;
}

// Row/column position of each cell on the regular centroid lattice: rows run
// north to south, columns west to east.
struct RasterLayout {
  std::vector<double> lats;  // descending
  std::vector<double> lons;  // ascending
  std::unordered_map<CellId, std::pair<std::size_t, std::size_t>> position;
};

inline RasterLayout raster_layout(const std::vector<GridCell>& cells) {
  std::set<double> lat_set, lon_set;
  for (const auto& c : cells) {
    lat_set.insert(c.lat);
    lon_set.insert(c.lon);
  }
  RasterLayout r;
  r.lats.assign(lat_set.rbegin(), lat_set.rend());
  r.lons.assign(lon_set.begin(), lon_set.end());
  for (const auto& c : cells) {
    const auto row = static_cast<std::size_t>(std::find(r.lats.begin(), r.lats.end(), c.lat) - r.lats.begin());
    const auto col = static_cast<std::size_t>(std::lower_bound(r.lons.begin(), r.lons.end(), c.lon) - r.lons.begin());
    r.position[c.cell_id] = {row, col};
  }
  return r;
}

// Writes a matrix whose first row holds longitudes and first column latitudes.
// Positions without a cell are left empty.
template <class CellText>
void write_raster(std::ostream& out, const RasterLayout& layout, CellText&& cell_text) {
  std::vector<std::vector<std::string>> grid(layout.lats.size(), std::vector<std::string>(layout.lons.size()));
  for (const auto& [id, pos] : layout.position) grid[pos.first][pos.second] = cell_text(id);
  out << "lat\\lon";
  for (double lon : layout.lons) out << ',' << text::format_double(lon);
  out << '\n';
  for (std::size_t r = 0; r < grid.size(); ++r) {
    out << text::format_double(layout.lats[r]);
    for (const auto& v : grid[r]) out << ',' << v;
    out << '\n';
  }
}

inline void write_surface_raster(std::ostream& out, const SpatialSurface& s, const std::vector<GridCell>& cells) {
  std::unordered_map<CellId, double> mu;
  for (std::size_t c = 0; c < s.cell_ids.size(); ++c) mu[s.cell_ids[c]] = s.mu[c];
  write_raster(out, raster_layout(cells), [&](CellId id) {
    auto it = mu.find(id);
    return it == mu.end() ? std::string() : text::format_double(it->second);
  });
}

}  // namespace conflux
