#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "conflux/data_model.hpp"
#include "conflux/gp/posterior.hpp"
#include "conflux/text.hpp"

namespace conflux {

// Ground truth for desk-scale experiments. The latent magnitude of cell c in
// month t is
//   baseline + link_scale * (hotspot(c) + long(c, t) + short(c, t))
// where hotspot is a static Matern-3/2 field over the centroids and the
// long/short trends are drawn with covariance K_space (x) K_time, so every
// cell's trend follows the two-trend temporal model and neighbouring cells
// move together. Observed magnitude adds N(0, noise^2); fatalities invert the
// log1p transform and are rounded and clamped at zero.
struct SynthConfig {
  int rows = 20;
  int cols = 20;
  int months = 372;
  double cell_size = 0.5;  // degrees
  double origin_lat = 0.25;
  double origin_lon = 0.25;

  double lengthscale_long = 120.0;
  double amplitude_long = 0.5;
  double lengthscale_short = 4.0;
  double amplitude_short = 0.3;
  double noise = 0.5;

  double spatial_lengthscale = 0.8;  // degrees
  double spatial_amplitude = 0.5;    // hotspot field amplitude
  double spatial_noise = 0.05;       // independent per-cell share of the space factor

  double link_scale = 1.0;
  double baseline = -1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (rows < 2 || cols < 2) throw DataError("synthetic grid must be at least 2x2");
    if (months < 24) throw DataError("synthetic series need at least 24 months");
    for (double v : {cell_size, lengthscale_long, amplitude_long, lengthscale_short, amplitude_short, noise,
                     spatial_lengthscale, spatial_amplitude, spatial_noise, link_scale})
      if (!(v > 0.0) || !std::isfinite(v)) throw DataError("synthetic hyperparameters must be positive");
    if (!std::isfinite(baseline)) throw DataError("synthetic baseline must be finite");
    const double lat_max = origin_lat + cell_size * (rows - 1);
    const double lon_max = origin_lon + cell_size * (cols - 1);
    if (origin_lat < -90 || lat_max > 90 || origin_lon < -180 || lon_max > 180)
      throw DataError("synthetic grid leaves the lat/lon domain");
  }
};

struct SynthTruth {
  // cells x months, cell order as in SynthDataset::events.cells
  Eigen::MatrixXd latent;  // non-negative latent magnitude, max(0, .)
  Eigen::MatrixXd trend_long;
  Eigen::MatrixXd trend_short;
  Eigen::VectorXd hotspot;
};

struct SynthDataset {
  EventData events;  // one record per cell-month
  SynthTruth truth;
};

inline std::vector<GridCell> synth_grid(const SynthConfig& c) {
  std::vector<GridCell> cells;
  for (int r = 0; r < c.rows; ++r)
    for (int k = 0; k < c.cols; ++k)
      cells.push_back({static_cast<CellId>(1 + r * c.cols + k), c.origin_lat + r * c.cell_size,
                       c.origin_lon + k * c.cell_size});
  return cells;
}

inline SynthDataset generate(const SynthConfig& config) {
  config.validate();
  using gp::GPModel;
  using gp::KernelKind;
  using gp::MatrixXd;

  SynthDataset out;
  out.events.cells = synth_grid(config);
  const auto n_cells = static_cast<Eigen::Index>(out.events.cells.size());
  const auto n_months = static_cast<Eigen::Index>(config.months);

  std::vector<int> month_idx(static_cast<std::size_t>(config.months));
  for (int m = 0; m < config.months; ++m) month_idx[static_cast<std::size_t>(m)] = m;
  const MatrixXd T = gp::months_as_inputs(month_idx);
  MatrixXd S(n_cells, 2);
  for (Eigen::Index i = 0; i < n_cells; ++i) {
    S(i, 0) = out.events.cells[static_cast<std::size_t>(i)].lon;
    S(i, 1) = out.events.cells[static_cast<std::size_t>(i)].lat;
  }

  const double latent_nugget = 1e-6;
  const GPModel long_model{{{KernelKind::SquaredExponential, config.lengthscale_long, config.amplitude_long}},
                           latent_nugget};
  const GPModel short_model{{{KernelKind::Matern32, config.lengthscale_short, config.amplitude_short}},
                            latent_nugget};
  const GPModel space_model{{{KernelKind::Matern32, config.spatial_lengthscale, 1.0}}, config.spatial_noise};

  const MatrixXd L_long = gp::prior_factor(long_model, T);
  const MatrixXd L_short = gp::prior_factor(short_model, T);
  const MatrixXd L_space = gp::prior_factor(space_model, S);
  // Rescale so the space factor has unit marginal variance.
  const double space_scale = 1.0 / std::sqrt(1.0 + config.spatial_noise * config.spatial_noise);

  std::mt19937_64 rng(config.seed);
  auto normal_matrix = [&](Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> z(0.0, 1.0);
    MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) M(i, j) = z(rng);
    return M;
  };

  out.truth.hotspot = config.spatial_amplitude * space_scale * (L_space * normal_matrix(n_cells, 1)).col(0);
  out.truth.trend_long = space_scale * L_space * normal_matrix(n_cells, n_months) * L_long.transpose();
  out.truth.trend_short = space_scale * L_space * normal_matrix(n_cells, n_months) * L_short.transpose();
  const MatrixXd noise = normal_matrix(n_cells, n_months);

  MatrixXd raw = out.truth.trend_long + out.truth.trend_short;
  raw.colwise() += out.truth.hotspot;
  raw = (config.link_scale * raw).array() + config.baseline;
  out.truth.latent = raw.cwiseMax(0.0);

  out.events.records.reserve(static_cast<std::size_t>(n_cells * n_months));
  for (Eigen::Index i = 0; i < n_cells; ++i) {
    const CellId id = out.events.cells[static_cast<std::size_t>(i)].cell_id;
    for (Eigen::Index m = 0; m < n_months; ++m) {
      const double observed = raw(i, m) + config.noise * noise(i, m);
      const auto fatalities = std::max<std::int64_t>(0, std::llround(std::expm1(observed)));
      out.events.records.push_back(make_record(id, static_cast<int>(m), fatalities));
    }
  }
  return out;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  return {{"rows", c.rows},
          {"cols", c.cols},
          {"months", c.months},
          {"cell_size", c.cell_size},
          {"origin_lat", c.origin_lat},
          {"origin_lon", c.origin_lon},
          {"lengthscale_long", c.lengthscale_long},
          {"amplitude_long", c.amplitude_long},
          {"lengthscale_short", c.lengthscale_short},
          {"amplitude_short", c.amplitude_short},
          {"noise", c.noise},
          {"spatial_lengthscale", c.spatial_lengthscale},
          {"spatial_amplitude", c.spatial_amplitude},
          {"spatial_noise", c.spatial_noise},
          {"link_scale", c.link_scale},
          {"baseline", c.baseline},
          {"seed", c.seed}};
}

inline void write_truth(std::ostream& out, const SynthDataset& d) {
  out << "cell_id,month_index,latent,trend_long,trend_short,hotspot\n";
  const auto& t = d.truth;
  for (Eigen::Index i = 0; i < t.latent.rows(); ++i)
    for (Eigen::Index m = 0; m < t.latent.cols(); ++m)
      out << d.events.cells[static_cast<std::size_t>(i)].cell_id << ',' << m << ','
          << text::format_double(t.latent(i, m)) << ',' << text::format_double(t.trend_long(i, m)) << ','
          << text::format_double(t.trend_short(i, m)) << ',' << text::format_double(t.hotspot[i]) << '\n';
}

}  // namespace conflux
