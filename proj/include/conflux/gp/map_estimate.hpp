#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "conflux/error.hpp"
#include "conflux/gp/lbfgs.hpp"
#include "conflux/gp/likelihood.hpp"
#include "conflux/parallel.hpp"

namespace conflux::gp {

struct MapOptions {
  int starts = 8;
  std::uint64_t seed = 0;
  LbfgsOptions lbfgs;
  // Random starts are prior draws truncated to +-start_spread sd; the search
  // box is the prior mean +-box_width sd in every log-parameter.
  double start_spread = 2.0;
  double box_width = 6.0;
  int jobs = 1;
};

struct StartReport {
  VectorXd initial;  // log-parameters
  VectorXd final;
  double log_posterior = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  StopReason reason = StopReason::MaxIterations;
  bool converged = false;
};

struct MapFit {
  GPModel model;
  HyperPrior prior;
  double log_posterior = 0.0;  // joint LML + log prior at the optimum
  double lml = 0.0;
  int best_start = 0;
  std::vector<StartReport> starts;

  int total_iterations() const {
    int n = 0;
    for (const auto& s : starts) n += s.iterations;
    return n;
  }
};

// MAP estimate of the log-hyperparameters: maximizes joint LML + log prior by
// multi-start L-BFGS. Start 0 is `init`; the rest are seeded prior draws. A
// start counts as converged on the gradient or function tolerance, or when
// the line search stalls with a gradient that is small relative to the
// objective. The best converged start wins.
inline MapFit map_estimate(const GPModel& init, const HyperPrior& prior,
                           std::span<const TrainingSet> data, const MapOptions& opt = {}) {
  init.validate();
  prior.validate(init.components.size());
  if (opt.starts < 1) throw DataError("map_estimate needs at least one start");
  const JointLikelihood likelihood(data);

  const VectorXd means = prior.log_means();
  const Eigen::Index p = means.size();
  LbfgsOptions lopt = opt.lbfgs;
  lopt.lower.resize(p);
  lopt.upper.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double sd = prior.at(static_cast<std::size_t>(i)).log_sd;
    lopt.lower[i] = means[i] - opt.box_width * sd;
    lopt.upper[i] = means[i] + opt.box_width * sd;
  }

  std::vector<VectorXd> initial(static_cast<std::size_t>(opt.starts));
  initial[0] = to_log_params(init);
  for (int s = 1; s < opt.starts; ++s) {
    std::mt19937_64 rng(derive_seed(opt.seed, static_cast<std::uint64_t>(s)));
    std::normal_distribution<double> z(0.0, 1.0);
    VectorXd x(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double draw = std::clamp(z(rng), -opt.start_spread, opt.start_spread);
      x[i] = means[i] + draw * prior.at(static_cast<std::size_t>(i)).log_sd;
    }
    initial[static_cast<std::size_t>(s)] = x;
  }

  auto objective = [&](const VectorXd& x, VectorXd& grad) {
    const GPModel m = from_log_params(init, x);
    auto r = likelihood.evaluate(m);
    const double lp = prior.log_density(x, &r.gradient);
    grad = -r.gradient;
    return -(r.value + lp);
  };

  std::vector<StartReport> reports(initial.size());
  parallel_for(initial.size(), opt.jobs, [&](std::size_t s) {
    StartReport& rep = reports[s];
    rep.initial = initial[s];
    const auto res = minimize_lbfgs(objective, initial[s], lopt);
    rep.final = res.x;
    rep.iterations = res.iterations;
    rep.reason = res.reason;
    rep.log_posterior = -res.value;
    VectorXd pg = res.gradient;
    for (Eigen::Index i = 0; i < pg.size(); ++i)
      if ((res.x[i] <= lopt.lower[i] && pg[i] > 0.0) || (res.x[i] >= lopt.upper[i] && pg[i] < 0.0)) pg[i] = 0.0;
    const bool stalled_at_optimum =
        res.reason == StopReason::LineSearchFailed &&
        pg.lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1.0, std::abs(res.value));
    rep.converged = std::isfinite(res.value) && (res.converged() || stalled_at_optimum);
  });

  int best = -1;
  for (std::size_t s = 0; s < reports.size(); ++s) {
    if (!reports[s].converged) continue;
    if (best < 0 || reports[s].log_posterior > reports[static_cast<std::size_t>(best)].log_posterior)
      best = static_cast<int>(s);
  }
  if (best < 0) {
    std::ostringstream msg;
    msg << "MAP estimation did not converge from any of " << reports.size() << " starts:";
    for (std::size_t s = 0; s < reports.size(); ++s)
      msg << " [start " << s << ": " << stop_reason_name(reports[s].reason) << " after "
          << reports[s].iterations << " iterations, log posterior " << reports[s].log_posterior << "]";
    throw NonConvergenceError(msg.str());
  }

  MapFit fit;
  fit.prior = prior;
  fit.best_start = best;
  fit.model = from_log_params(init, reports[static_cast<std::size_t>(best)].final);
  fit.log_posterior = reports[static_cast<std::size_t>(best)].log_posterior;
  fit.lml = likelihood.evaluate(fit.model).value;
  fit.starts = std::move(reports);
  return fit;
}

}  // namespace conflux::gp
