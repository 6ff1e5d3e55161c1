#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "conflux/gp/model.hpp"

namespace conflux::gp {

struct PosteriorSummary {
  MatrixXd query_points;
  VectorXd mu_full;
  VectorXd sigma_full;  // latent (noise-free) predictive standard deviation
  std::vector<VectorXd> mu_component;
};

// Conditions a model on fixed inputs X and precomputes everything that does
// not depend on the targets, so many target vectors over the same inputs
// (one per grid cell) cost one triangular solve each.
class Conditioner {
 public:
  Conditioner(const GPModel& model, const MatrixXd& X, const MatrixXd& X_star)
      : model_(model), X_star_(X_star) {
    model.validate();
    check_inputs(X);
    check_inputs(X_star);
    if (X.cols() != X_star.cols()) throw DataError("query and training inputs differ in dimension");
    const MatrixXd D = distance_matrix(X, X);
    MatrixXd K = MatrixXd::Zero(X.rows(), X.rows());
    for (const auto& c : model.components) K += component_gram(c, D);
    factor_ = factorize_noisy(model, K);

    const MatrixXd D_star = distance_matrix(X_star, X);
    MatrixXd K_star = MatrixXd::Zero(X_star.rows(), X.rows());
    for (const auto& c : model.components) {
      cross_.push_back(component_gram(c, D_star));
      K_star += cross_.back();
    }
    // var(f*) = k** - k*^T K^-1 k*; k** = sum eta^2 for stationary kernels.
    const MatrixXd V = factor_.llt.matrixL().solve(K_star.transpose());
    sigma_ = (model.signal_variance() - V.colwise().squaredNorm().array())
                 .max(0.0)
                 .sqrt()
                 .matrix()
                 .transpose();
  }

  Eigen::Index training_size() const { return factor_.llt.matrixLLT().rows(); }

  VectorXd alpha(const VectorXd& y) const {
    if (y.size() != training_size()) throw DataError("targets do not match training inputs");
    return factor_.llt.solve(y);
  }

  PosteriorSummary summarize(const VectorXd& y) const {
    const VectorXd a = alpha(y);
    PosteriorSummary s;
    s.query_points = X_star_;
    s.mu_full = VectorXd::Zero(X_star_.rows());
    for (const auto& Kc : cross_) {
      s.mu_component.push_back(Kc * a);
      s.mu_full += s.mu_component.back();
    }
    s.sigma_full = sigma_;
    return s;
  }

  const VectorXd& sigma() const { return sigma_; }
  const GPModel& model() const { return model_; }

 private:
  GPModel model_;
  MatrixXd X_star_;
  NoisyFactor factor_;
  std::vector<MatrixXd> cross_;
  VectorXd sigma_;
};

// mu = K(X*, X) alpha with alpha = K_noisy^-1 y; each component's mean uses
// its own cross-covariance against the same alpha, so they sum to mu.
inline PosteriorSummary posterior(const GPModel& model, const MatrixXd& X, const VectorXd& y,
                                  const MatrixXd& X_star) {
  if (X.rows() != y.size()) throw DataError("inputs and targets differ in length");
  return Conditioner(model, X, X_star).summarize(y);
}

// Lower Cholesky factor of the noisy prior covariance at X.
inline MatrixXd prior_factor(const GPModel& model, const MatrixXd& X) {
  model.validate();
  check_inputs(X);
  const NoisyFactor f = factorize_noisy(model, gram_matrix(model, X, false));
  return f.llt.matrixL();
}

inline VectorXd standard_normal_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
  return v;
}

// One draw from N(0, K_noisy(X, X)).
inline VectorXd sample_prior(const GPModel& model, const MatrixXd& X, std::uint64_t seed) {
  const MatrixXd L = prior_factor(model, X);
  std::mt19937_64 rng(seed);
  return L * standard_normal_vector(X.rows(), rng);
}

}  // namespace conflux::gp
