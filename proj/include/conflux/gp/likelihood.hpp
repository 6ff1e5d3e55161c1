#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "conflux/gp/model.hpp"

namespace conflux::gp {

struct LmlResult {
  double value = 0.0;
  VectorXd gradient;  // w.r.t. log-parameters, layout as to_log_params
};

// One regression problem: inputs X (rows are points) and targets y.
struct TrainingSet {
  MatrixXd X;
  VectorXd y;
};

namespace detail {

// Log marginal likelihood of m target columns that share the inputs X,
// given the precomputed pairwise distance matrix D.
inline LmlResult shared_input_lml(const GPModel& model, const MatrixXd& D, const MatrixXd& Y) {
  const Eigen::Index n = D.rows();
  const double m = static_cast<double>(Y.cols());
  const std::size_t k = model.components.size();

  std::vector<MatrixXd> K_c;
  K_c.reserve(k);
  MatrixXd K = MatrixXd::Zero(n, n);
  for (const auto& c : model.components) {
    K_c.push_back(component_gram(c, D));
    K += K_c.back();
  }
  const NoisyFactor f = factorize_noisy(model, K);
  const MatrixXd alpha = f.llt.solve(Y);
  const double log_det = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();

  LmlResult r;
  r.value = -0.5 * Y.cwiseProduct(alpha).sum() - 0.5 * m * log_det -
            0.5 * m * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // dL/dtheta = 1/2 tr(W dK/dtheta), W = alpha alpha^T - m K^-1.
  MatrixXd W = alpha * alpha.transpose();
  W -= m * f.llt.solve(MatrixXd::Identity(n, n));
  const double trace_w = W.trace();

  r.gradient = VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
  for (std::size_t c = 0; c < k; ++c) {
    const auto& spec = model.components[c];
    const MatrixXd dK_dlen = D.unaryExpr([&](double d) { return kernel_dlog_lengthscale(spec, d); });
    const double eta2 = spec.amplitude * spec.amplitude;
    r.gradient[static_cast<Eigen::Index>(2 * c)] = 0.5 * W.cwiseProduct(dK_dlen).sum();
    // The jitter scales with eta^2 as well.
    r.gradient[static_cast<Eigen::Index>(2 * c + 1)] =
        W.cwiseProduct(K_c[c]).sum() + trace_w * f.jitter_factor * eta2;
  }
  r.gradient[static_cast<Eigen::Index>(2 * k)] = trace_w * model.noise * model.noise;
  return r;
}

}  // namespace detail

// value = -1/2 y^T K^-1 y - 1/2 log|K| - n/2 log(2 pi), K = Gram + (eps^2 + jitter) I.
// Y may hold several target columns over the same inputs; their terms add.
inline LmlResult log_marginal_likelihood(const GPModel& model, const MatrixXd& X, const MatrixXd& Y) {
  model.validate();
  check_inputs(X);
  if (Y.rows() != X.rows()) throw DataError("inputs and targets differ in length");
  return detail::shared_input_lml(model, distance_matrix(X, X), Y);
}

// Sum of independent log marginal likelihoods with shared hyperparameters.
// Problems whose inputs coincide are factorized once. Distances are cached,
// so repeated evaluation during optimization only pays for the algebra.
class JointLikelihood {
 public:
  explicit JointLikelihood(std::span<const TrainingSet> sets) {
    if (sets.empty()) throw DataError("joint likelihood needs at least one timeline");
    for (const auto& s : sets) {
      check_inputs(s.X);
      if (s.X.rows() != s.y.size()) throw DataError("inputs and targets differ in length");
      Group* found = nullptr;
      for (auto& g : groups_)
        if (g.X.rows() == s.X.rows() && g.X.cols() == s.X.cols() && g.X == s.X) {
          found = &g;
          break;
        }
      if (!found) {
        groups_.push_back({s.X, distance_matrix(s.X, s.X), {}, {}});
        found = &groups_.back();
      }
      found->targets.push_back(s.y);
    }
    for (auto& g : groups_) {
      g.Y.resize(g.X.rows(), static_cast<Eigen::Index>(g.targets.size()));
      for (std::size_t j = 0; j < g.targets.size(); ++j) g.Y.col(static_cast<Eigen::Index>(j)) = g.targets[j];
      g.targets.clear();
    }
  }

  LmlResult evaluate(const GPModel& model) const {
    model.validate();
    LmlResult total;
    total.gradient = VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count()));
    for (const auto& g : groups_) {
      const auto r = detail::shared_input_lml(model, g.D, g.Y);
      total.value += r.value;
      total.gradient += r.gradient;
    }
    return total;
  }

  std::size_t group_count() const { return groups_.size(); }

 private:
  struct Group {
    MatrixXd X;
    MatrixXd D;
    std::vector<VectorXd> targets;
    MatrixXd Y;
  };
  std::vector<Group> groups_;
};

inline LmlResult joint_lml(const GPModel& model, std::span<const TrainingSet> sets) {
  return JointLikelihood(sets).evaluate(model);
}

}  // namespace conflux::gp
