#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "conflux/error.hpp"

namespace conflux::gp {

enum class StopReason { GradientTolerance, FunctionTolerance, MaxIterations, LineSearchFailed };

inline std::string_view stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::GradientTolerance: return "gradient_tolerance";
    case StopReason::FunctionTolerance: return "function_tolerance";
    case StopReason::MaxIterations: return "max_iterations";
    case StopReason::LineSearchFailed: return "line_search_failed";
  }
  return "unknown";
}

struct LbfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-5;  // infinity norm
  double function_tolerance = 1e-12;  // relative, must hold for 3 consecutive steps
  int memory = 10;
  double max_step = 2.0;  // infinity-norm cap on a single step
  // Optional box; empty vectors mean unbounded.
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd gradient;
  int iterations = 0;
  StopReason reason = StopReason::MaxIterations;

  bool converged() const {
    return reason == StopReason::GradientTolerance || reason == StopReason::FunctionTolerance;
  }
};

// Objective returns f(x) and writes its gradient. NumericalError thrown by the
// objective is treated as f = +inf so the line search backs off.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Limited-memory BFGS minimizer with a backtracking Armijo line search. With
// a box, iterates are projected onto it and convergence is judged on the
// projected gradient.
inline LbfgsResult minimize_lbfgs(const Objective& objective, Eigen::VectorXd x0,
                                  const LbfgsOptions& opt = {}) {
  using Eigen::VectorXd;
  auto safe_eval = [&](const VectorXd& x, VectorXd& g) {
    try {
      const double f = objective(x, g);
      if (!std::isfinite(f) || !g.allFinite()) return std::numeric_limits<double>::infinity();
      return f;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  const bool boxed = opt.lower.size() == x0.size() && opt.upper.size() == x0.size();
  auto project = [&](VectorXd x) {
    if (boxed) x = x.cwiseMax(opt.lower).cwiseMin(opt.upper);
    return x;
  };
  auto projected_gradient = [&](const VectorXd& x, const VectorXd& g) {
    VectorXd pg = g;
    if (!boxed) return pg;
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if ((x[i] <= opt.lower[i] && g[i] > 0.0) || (x[i] >= opt.upper[i] && g[i] < 0.0)) pg[i] = 0.0;
    return pg;
  };

  LbfgsResult res;
  res.x = project(std::move(x0));
  res.gradient = VectorXd::Zero(res.x.size());
  res.value = safe_eval(res.x, res.gradient);
  if (!std::isfinite(res.value)) {
    res.reason = StopReason::LineSearchFailed;
    return res;
  }

  std::deque<VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int flat_steps = 0;

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    const VectorXd pg = projected_gradient(res.x, res.gradient);
    if (pg.lpNorm<Eigen::Infinity>() < opt.gradient_tolerance) {
      res.reason = StopReason::GradientTolerance;
      return res;
    }

    // Two-loop recursion for d = -H g.
    VectorXd q = pg;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      const auto ui = static_cast<std::size_t>(i);
      a[ui] = rho_hist[ui] * s_hist[ui].dot(q);
      q -= a[ui] * y_hist[ui];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    VectorXd d = -q;
    for (Eigen::Index i = 0; boxed && i < d.size(); ++i)
      if (pg[i] == 0.0) d[i] = 0.0;
    if (d.dot(pg) >= 0.0) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -pg;
    }
    const double dmax = d.lpNorm<Eigen::Infinity>();
    if (dmax > opt.max_step) d *= opt.max_step / dmax;

    double t = 1.0;
    VectorXd x_new, g_new(res.x.size());
    double f_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = project(res.x + t * d);
      f_new = safe_eval(x_new, g_new);
      const double decrease = res.gradient.dot(x_new - res.x);
      if (std::isfinite(f_new) && decrease < 0.0 && f_new <= res.value + 1e-4 * decrease) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      res.reason = StopReason::LineSearchFailed;
      return res;
    }

    const VectorXd s = x_new - res.x;
    const VectorXd yv = g_new - res.gradient;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }

    const double change = std::abs(res.value - f_new);
    flat_steps = change <= opt.function_tolerance * std::max(1.0, std::abs(res.value)) ? flat_steps + 1 : 0;
    res.x = std::move(x_new);
    res.value = f_new;
    res.gradient = g_new;
    if (flat_steps >= 3) {
      ++res.iterations;
      res.reason = StopReason::FunctionTolerance;
      return res;
    }
  }
  res.reason = projected_gradient(res.x, res.gradient).lpNorm<Eigen::Infinity>() < opt.gradient_tolerance
                   ? StopReason::GradientTolerance
                   : StopReason::MaxIterations;
  return res;
}

}  // namespace conflux::gp
