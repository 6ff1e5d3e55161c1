#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include "conflux/error.hpp"

namespace conflux::gp {

enum class KernelKind { SquaredExponential, Matern32 };

inline std::string_view kernel_name(KernelKind k) {
  return k == KernelKind::SquaredExponential ? "SE" : "Matern32";
}

inline KernelKind parse_kernel_kind(std::string_view s) {
  if (s == "SE") return KernelKind::SquaredExponential;
  if (s == "Matern32") return KernelKind::Matern32;
  throw DataError("unknown kernel kind '" + std::string(s) + "'");
}

// Stationary covariance with lengthscale l and amplitude eta:
//   SE:       eta^2 exp(-d^2 / (2 l^2))
//   Matern32: eta^2 (1 + sqrt(3) d / l) exp(-sqrt(3) d / l)
struct KernelSpec {
  KernelKind kind = KernelKind::SquaredExponential;
  double lengthscale = 1.0;
  double amplitude = 1.0;
};

inline constexpr double kSqrt3 = 1.7320508075688772;

inline double kernel_eval(const KernelSpec& k, double d) {
  const double var = k.amplitude * k.amplitude;
  const double r = d / k.lengthscale;
  switch (k.kind) {
    case KernelKind::SquaredExponential:
      return var * std::exp(-0.5 * r * r);
    case KernelKind::Matern32: {
      const double s = kSqrt3 * r;
      return var * (1.0 + s) * std::exp(-s);
    }
  }
  return 0.0;
}

// Derivative of kernel_eval with respect to log(lengthscale).
inline double kernel_dlog_lengthscale(const KernelSpec& k, double d) {
  const double var = k.amplitude * k.amplitude;
  const double r = d / k.lengthscale;
  switch (k.kind) {
    case KernelKind::SquaredExponential:
      return var * r * r * std::exp(-0.5 * r * r);
    case KernelKind::Matern32: {
      const double s = kSqrt3 * r;
      return var * s * s * std::exp(-s);
    }
  }
  return 0.0;
}

}  // namespace conflux::gp
