#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "kendallreg/error.hpp"

namespace kreg {

enum class TransformFamily { identity, fisher, loglog };

inline std::string_view to_string(TransformFamily f) {
  switch (f) {
    case TransformFamily::identity: return "identity";
    case TransformFamily::fisher: return "fisher";
    case TransformFamily::loglog: return "loglog";
  }
  return "identity";
}

inline TransformFamily transform_family_from_string(std::string_view s) {
  if (s == "identity") return TransformFamily::identity;
  if (s == "fisher") return TransformFamily::fisher;
  if (s == "loglog") return TransformFamily::loglog;
  throw ArgumentError("unknown transform '" + std::string(s) + "'");
}

/// Increasing link Lambda from [-1, 1] to R, with clamping of tau into
/// [-1 + eps, 1 - eps] for the families that blow up at the boundary.
struct TransformSpec {
  TransformFamily family = TransformFamily::identity;
  double clamp_eps = 1e-6;

  double clamp(double tau) const {
    if (std::isnan(tau)) throw ArgumentError("transform: tau is NaN");
    if (family == TransformFamily::identity) return tau;
    return std::clamp(tau, -1.0 + clamp_eps, 1.0 - clamp_eps);
  }

  double apply(double tau) const {
    const double t = clamp(tau);
    switch (family) {
      case TransformFamily::identity: return t;
      case TransformFamily::fisher: return std::log1p(t) - std::log1p(-t);
      case TransformFamily::loglog: return std::log(-std::log((1.0 - t) / 2.0));
    }
    return t;
  }

  /// Always lands in [-1, 1]; the identity link saturates by clipping.
  double inverse(double y) const {
    switch (family) {
      case TransformFamily::identity: return std::clamp(y, -1.0, 1.0);
      case TransformFamily::fisher: return std::tanh(0.5 * y);
      case TransformFamily::loglog: return std::clamp(1.0 - 2.0 * std::exp(-std::exp(y)), -1.0, 1.0);
    }
    return y;
  }

  double derivative(double tau) const {
    const double t = clamp(tau);
    switch (family) {
      case TransformFamily::identity: return 1.0;
      case TransformFamily::fisher: return 2.0 / (1.0 - t * t);
      case TransformFamily::loglog: return 1.0 / ((1.0 - t) * (-std::log((1.0 - t) / 2.0)));
    }
    return 1.0;
  }

  /// C_Lambda' : sup of Lambda' over [lo, hi], scanned on a fine grid.
  double derivative_bound(double lo, double hi, int grid = 10001) const {
    detail::require(lo <= hi, "derivative_bound: lo > hi");
    double best = 0.0;
    for (int k = 0; k < grid; ++k) {
      const double t = lo + (hi - lo) * k / (grid - 1);
      best = std::max(best, derivative(t));
    }
    return best;
  }
};

}  // namespace kreg
