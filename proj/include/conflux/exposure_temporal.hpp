#pragma once

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "conflux/data_model.hpp"
#include "conflux/gp/map_estimate.hpp"
#include "conflux/gp/posterior.hpp"
#include "conflux/parallel.hpp"
#include "conflux/text.hpp"

namespace conflux {

// Posterior trend of one cell over its conditioning months plus a forecast
// horizon. mu_long + mu_short == mu_full.
struct TrendSurface {
  CellId cell_id = 0;
  std::vector<int> months;
  std::vector<double> mu_full;
  std::vector<double> mu_long;
  std::vector<double> mu_short;
  std::vector<double> sigma;
  double lengthscale_long = 0.0;
  double lengthscale_short = 0.0;
};

// Same shape; the targets are spatial exposure instead of magnitude.
using TsceSurface = TrendSurface;

struct TwoTrendPriorSpec {
  gp::LogNormalPrior long_lengthscale{std::log(100.0), 1.0};
  gp::LogNormalPrior short_lengthscale{std::log(5.0), 1.0};
  gp::LogNormalPrior amplitude{std::log(0.5), 1.5};
  gp::LogNormalPrior noise{std::log(0.5), 1.5};

  // Component 0 is the long SE trend, component 1 the short Matern-3/2 trend.
  gp::HyperPrior hyper_prior() const {
    return {{long_lengthscale, short_lengthscale}, {amplitude, amplitude}, noise};
  }
};

inline gp::GPModel two_trend_model_at(const gp::HyperPrior& prior) {
  gp::GPModel m;
  m.components = {{gp::KernelKind::SquaredExponential, std::exp(prior.lengthscale[0].log_mean),
                   std::exp(prior.amplitude[0].log_mean)},
                  {gp::KernelKind::Matern32, std::exp(prior.lengthscale[1].log_mean),
                   std::exp(prior.amplitude[1].log_mean)}};
  m.noise = std::exp(prior.noise.log_mean);
  return m;
}

inline std::vector<gp::TrainingSet> to_training_sets(const std::vector<Timeline>& timelines) {
  std::vector<gp::TrainingSet> sets;
  sets.reserve(timelines.size());
  for (const auto& t : timelines) {
    if (t.months.size() != t.values.size()) throw DataError("timeline months and values differ in length");
    sets.push_back({gp::months_as_inputs(t.months), gp::as_vector(t.values)});
  }
  return sets;
}

// MAP fit of the long (SE) + short (Matern-3/2) model on shared hyperparameters.
inline gp::MapFit fit_two_trend(const std::vector<Timeline>& timelines,
                                const TwoTrendPriorSpec& prior_spec = {},
                                const gp::MapOptions& options = {}) {
  if (timelines.empty()) throw DataError("no timelines to fit; the selection rule kept none");
  const auto prior = prior_spec.hyper_prior();
  const auto sets = to_training_sets(timelines);
  return gp::map_estimate(two_trend_model_at(prior), prior, sets, options);
}

// Temporal conflict exposure on magnitude timelines.
inline gp::MapFit fit_tce(const std::vector<Timeline>& training_subset,
                          const TwoTrendPriorSpec& prior_spec = {},
                          const gp::MapOptions& options = {}) {
  return fit_two_trend(training_subset, prior_spec, options);
}

// Months beyond the last training month + l carry little signal; the
// lengthscale itself is the heuristic reliability limit.
inline double signal_horizon(double lengthscale) {
  if (!(lengthscale > 0.0)) throw DataError("lengthscale must be positive");
  return lengthscale;
}

namespace detail {

inline std::vector<int> extended_months(const std::vector<int>& months, int horizon) {
  if (horizon < 0) throw DataError("horizon must be >= 0");
  if (months.empty()) throw DataError("empty timeline");
  std::vector<int> out = months;
  for (int h = 1; h <= horizon; ++h) out.push_back(months.back() + h);
  return out;
}

inline TrendSurface make_surface(CellId cell, const std::vector<int>& months, const gp::GPModel& model) {
  TrendSurface s;
  s.cell_id = cell;
  s.months = months;
  s.lengthscale_long = model.components.at(0).lengthscale;
  s.lengthscale_short = model.components.size() > 1 ? model.components[1].lengthscale : 0.0;
  return s;
}

inline void fill_surface(TrendSurface& s, const gp::Conditioner& cond, const std::vector<double>& values) {
  const auto n = s.months.size();
  s.sigma.assign(cond.sigma().data(), cond.sigma().data() + n);
  const bool all_zero = std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  if (all_zero) {
    // alpha = 0 exactly.
    s.mu_full.assign(n, 0.0);
    s.mu_long.assign(n, 0.0);
    s.mu_short.assign(n, 0.0);
    return;
  }
  const auto post = cond.summarize(gp::as_vector(values));
  auto copy = [n](const gp::VectorXd& v) { return std::vector<double>(v.data(), v.data() + n); };
  s.mu_full = copy(post.mu_full);
  s.mu_long = copy(post.mu_component.at(0));
  s.mu_short = post.mu_component.size() > 1 ? copy(post.mu_component[1]) : std::vector<double>(n, 0.0);
}

}  // namespace detail

// Posterior over the timeline's months plus `horizon` future months.
inline TrendSurface extrapolate_tce(const Timeline& timeline, const gp::GPModel& model, int horizon) {
  const auto months = detail::extended_months(timeline.months, horizon);
  const gp::Conditioner cond(model, gp::months_as_inputs(timeline.months), gp::months_as_inputs(months));
  TrendSurface s = detail::make_surface(timeline.cell_id, months, model);
  detail::fill_surface(s, cond, timeline.values);
  return s;
}

inline TsceSurface extrapolate_tsce(const Timeline& sce_timeline, const gp::GPModel& model, int horizon) {
  return extrapolate_tce(sce_timeline, model, horizon);
}

// Extrapolates every timeline with shared hyperparameters. Timelines over the
// same months share one factorization.
inline std::vector<TrendSurface> extrapolate_all(const std::vector<Timeline>& timelines,
                                                 const gp::GPModel& model, int horizon, int jobs = 1) {
  std::vector<TrendSurface> out(timelines.size());
  std::map<std::vector<int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < timelines.size(); ++i) groups[timelines[i].months].push_back(i);
  for (const auto& [months, members] : groups) {
    const auto query = detail::extended_months(months, horizon);
    const gp::Conditioner cond(model, gp::months_as_inputs(months), gp::months_as_inputs(query));
    parallel_for(members.size(), jobs, [&](std::size_t k) {
      const auto i = members[k];
      out[i] = detail::make_surface(timelines[i].cell_id, query, model);
      detail::fill_surface(out[i], cond, timelines[i].values);
    });
  }
  return out;
}

inline constexpr std::string_view kTrendHeader = "cell_id,month_index,mu_full,mu_long,mu_short,sigma";

inline void write_trend_surfaces(std::ostream& out, const std::vector<TrendSurface>& surfaces) {
  out << kTrendHeader << '\n';
  for (const auto& s : surfaces)
    for (std::size_t i = 0; i < s.months.size(); ++i)
      out << s.cell_id << ',' << s.months[i] << ',' << text::format_double(s.mu_full[i]) << ','
          << text::format_double(s.mu_long[i]) << ',' << text::format_double(s.mu_short[i]) << ','
          << text::format_double(s.sigma[i]) << '\n';
}

// Rows of one cell must be contiguous and in month order.
inline std::vector<TrendSurface> read_trend_surfaces(std::istream& in) {
  std::vector<TrendSurface> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty()) continue;
    if (line_no == 1) {
      if (body != kTrendHeader) throw DataError("trend surface file: unexpected header");
      continue;
    }
    const auto f = text::split(body, ',');
    CellId cell = 0;
    int month = 0;
    double v[4];
    bool ok = f.size() == 6 && text::parse_number(f[0], cell) && text::parse_number(f[1], month);
    for (int k = 0; ok && k < 4; ++k) ok = text::parse_number(f[static_cast<std::size_t>(k + 2)], v[k]);
    if (!ok) throw DataError("trend surface file line " + std::to_string(line_no) + ": malformed row");
    if (out.empty() || out.back().cell_id != cell) {
      out.emplace_back();
      out.back().cell_id = cell;
    }
    auto& s = out.back();
    if (!s.months.empty() && month <= s.months.back())
      throw DataError("trend surface file line " + std::to_string(line_no) + ": months out of order");
    s.months.push_back(month);
    s.mu_full.push_back(v[0]);
    s.mu_long.push_back(v[1]);
    s.mu_short.push_back(v[2]);
    s.sigma.push_back(v[3]);
  }
  return out;
}

}  // namespace conflux
