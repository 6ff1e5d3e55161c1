#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "conflux/error.hpp"
#include "conflux/gp/kernel.hpp"

namespace conflux::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Additive zero-mean GP: f = sum of components, y = f + N(0, noise^2).
struct GPModel {
  std::vector<KernelSpec> components;
  double noise = 1.0;

  std::size_t parameter_count() const { return 2 * components.size() + 1; }

  double signal_variance() const {
    double v = 0.0;
    for (const auto& c : components) v += c.amplitude * c.amplitude;
    return v;
  }

  void validate() const {
    if (components.empty() || components.size() > 2)
      throw DataError("GP model needs one or two kernel components");
    for (const auto& c : components)
      if (!(c.lengthscale > 0.0) || !(c.amplitude > 0.0) || !std::isfinite(c.lengthscale) ||
          !std::isfinite(c.amplitude))
        throw DataError("kernel lengthscale and amplitude must be positive and finite");
    if (!(noise > 0.0) || !std::isfinite(noise)) throw DataError("noise must be positive and finite");
  }
};

// Log-parameter layout: [log l_1, log eta_1, ..., log l_k, log eta_k, log eps].
inline VectorXd to_log_params(const GPModel& m) {
  VectorXd p(static_cast<Eigen::Index>(m.parameter_count()));
  Eigen::Index i = 0;
  for (const auto& c : m.components) {
    p[i++] = std::log(c.lengthscale);
    p[i++] = std::log(c.amplitude);
  }
  p[i] = std::log(m.noise);
  return p;
}

inline GPModel from_log_params(GPModel shape, const VectorXd& p) {
  Eigen::Index i = 0;
  for (auto& c : shape.components) {
    c.lengthscale = std::exp(p[i++]);
    c.amplitude = std::exp(p[i++]);
  }
  shape.noise = std::exp(p[i]);
  return shape;
}

struct LogNormalPrior {
  double log_mean = 0.0;
  double log_sd = 1.0;
};

// Independent normal priors on each log-hyperparameter.
struct HyperPrior {
  std::vector<LogNormalPrior> lengthscale;  // one per component
  std::vector<LogNormalPrior> amplitude;    // one per component
  LogNormalPrior noise;

  void validate(std::size_t components) const {
    if (lengthscale.size() != components || amplitude.size() != components)
      throw DataError("prior does not match the number of kernel components");
    auto ok = [](const LogNormalPrior& p) {
      return std::isfinite(p.log_mean) && std::isfinite(p.log_sd) && p.log_sd > 0.0;
    };
    for (std::size_t c = 0; c < components; ++c)
      if (!ok(lengthscale[c]) || !ok(amplitude[c])) throw DataError("prior log-sd must be positive");
    if (!ok(noise)) throw DataError("prior log-sd must be positive");
  }

  const LogNormalPrior& at(std::size_t param) const {
    const std::size_t k = lengthscale.size();
    if (param == 2 * k) return noise;
    return param % 2 == 0 ? lengthscale[param / 2] : amplitude[param / 2];
  }

  VectorXd log_means() const {
    VectorXd m(static_cast<Eigen::Index>(2 * lengthscale.size() + 1));
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = at(static_cast<std::size_t>(i)).log_mean;
    return m;
  }

  // Log density over log-parameters, with its gradient accumulated into grad.
  double log_density(const VectorXd& log_params, VectorXd* grad = nullptr) const {
    double total = 0.0;
    const double norm = 0.5 * std::log(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < log_params.size(); ++i) {
      const auto& p = at(static_cast<std::size_t>(i));
      const double z = (log_params[i] - p.log_mean) / p.log_sd;
      total += -0.5 * z * z - std::log(p.log_sd) - norm;
      if (grad) (*grad)[i] += -z / p.log_sd;
    }
    return total;
  }
};

// Relative diagonal jitter: starts at 1e-8 * sum(eta^2), escalates x10 up to 1e-4.
inline constexpr double kJitterStart = 1e-8;
inline constexpr double kJitterMax = 1e-4;

inline void check_inputs(const MatrixXd& X) {
  if (X.rows() == 0) throw DataError("GP inputs must be non-empty");
  if (!X.allFinite()) throw DataError("non-finite GP input coordinate");
}

inline double point_distance(const MatrixXd& A, Eigen::Index i, const MatrixXd& B, Eigen::Index j) {
  if (A.cols() == 1) return std::abs(A(i, 0) - B(j, 0));
  return (A.row(i) - B.row(j)).norm();
}

inline MatrixXd distance_matrix(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd D(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < B.rows(); ++j) D(i, j) = point_distance(A, i, B, j);
  return D;
}

inline MatrixXd component_gram(const KernelSpec& k, const MatrixXd& D) {
  return D.unaryExpr([&](double d) { return kernel_eval(k, d); });
}

// Sum of component covariances between rows of A and rows of B.
inline MatrixXd cross_covariance(const GPModel& m, const MatrixXd& A, const MatrixXd& B) {
  const MatrixXd D = distance_matrix(A, B);
  MatrixXd K = MatrixXd::Zero(A.rows(), B.rows());
  for (const auto& c : m.components) K += component_gram(c, D);
  return K;
}

inline MatrixXd gram_matrix(const GPModel& m, const MatrixXd& X, bool include_noise,
                            double jitter_factor = kJitterStart) {
  check_inputs(X);
  MatrixXd K = cross_covariance(m, X, X);
  if (include_noise)
    K.diagonal().array() += m.noise * m.noise + jitter_factor * m.signal_variance();
  return K;
}

// Cholesky of the noisy Gram matrix with the jitter that made it succeed.
struct NoisyFactor {
  Eigen::LLT<MatrixXd> llt;
  double jitter_factor = kJitterStart;
};

// Factorizes K + (eps^2 + jitter) I given the noise-free K.
inline NoisyFactor factorize_noisy(const GPModel& m, const MatrixXd& K_signal) {
  NoisyFactor f;
  for (double jf = kJitterStart; jf <= kJitterMax * 1.0000001; jf *= 10.0) {
    MatrixXd K = K_signal;
    K.diagonal().array() += m.noise * m.noise + jf * m.signal_variance();
    f.llt.compute(K);
    if (f.llt.info() == Eigen::Success) {
      const auto& L = f.llt.matrixLLT();
      if (L.diagonal().allFinite() && (L.diagonal().array() > 0.0).all()) {
        f.jitter_factor = jf;
        return f;
      }
    }
  }
  throw SingularModelError("Cholesky factorization failed after jitter escalation to " +
                           std::to_string(kJitterMax));
}

inline MatrixXd months_as_inputs(const std::vector<int>& months) {
  MatrixXd X(static_cast<Eigen::Index>(months.size()), 1);
  for (std::size_t i = 0; i < months.size(); ++i) X(static_cast<Eigen::Index>(i), 0) = months[i];
  return X;
}

inline VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace conflux::gp
