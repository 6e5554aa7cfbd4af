#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/bernoulli.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>

#include "kendallreg/error.hpp"
#include "kendallreg/kernel.hpp"
#include "kendallreg/parallel.hpp"
#include "kendallreg/rng.hpp"

namespace kreg {

inline double normal_cdf(double x) { return 0.5 * boost::math::erfc(-x / std::numbers::sqrt2); }

inline double normal_quantile(double u) {
  detail::require(u > 0.0 && u < 1.0, "normal_quantile: u must lie in (0,1)");
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
}

/// Gaussian copula: rho = sin(pi tau / 2).
inline double tau_to_rho_gaussian(double tau) {
  detail::require(std::abs(tau) < 1.0, "tau_to_rho_gaussian: |tau| must be < 1");
  return std::sin(std::numbers::pi * tau / 2.0);
}

/// Debye function D1(x) = (1/x) int_0^x t/(e^t - 1) dt for x > 0.
inline double debye1(double x) {
  detail::require(x > 0, "debye1: x must be > 0");
  if (x < 2.0) {
    // int_0^x t/(e^t-1) dt = x - x^2/4 + sum_k B_2k x^(2k+1) / ((2k+1) (2k)!)
    double sum = 1.0 - x / 4.0;
    double pow_over_fact = 1.0;
    for (int k = 1; k <= 40; ++k) {
      pow_over_fact *= x * x / ((2.0 * k - 1.0) * (2.0 * k));
      const double term = boost::math::bernoulli_b2n<double>(k) * pow_over_fact / (2.0 * k + 1.0);
      sum += term;
      if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
  // int_0^x t/(e^t-1) dt = pi^2/6 - sum_k e^{-kx} (x/k + 1/k^2)
  double tail = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-k * x) * (x / k + 1.0 / (static_cast<double>(k) * k));
    tail += term;
    if (term < 1e-18 * tail) break;
  }
  return (std::numbers::pi * std::numbers::pi / 6.0 - tail) / x;
}

namespace detail {

inline double frank_tau_positive(double theta) {
  if (theta < 1e-3) {
    const double t2 = theta * theta;
    return theta / 9.0 - theta * t2 / 900.0 + theta * t2 * t2 / 52920.0;
  }
  return 1.0 + 4.0 * (debye1(theta) - 1.0) / theta;
}

}  // namespace detail

/// Kendall's tau of the Frank copula, tau = 1 + 4 (D1(theta) - 1) / theta.
/// With `allow_zero`, theta = 0 maps to the independence limit 0.
inline double frank_tau_from_theta(double theta, bool allow_zero = false) {
  detail::require(!std::isnan(theta), "frank_tau_from_theta: NaN");
  if (theta == 0.0) {
    if (allow_zero) return 0.0;
    throw ArgumentError("frank_tau_from_theta: theta must be nonzero");
  }
  if (std::isinf(theta)) return theta > 0 ? 1.0 : -1.0;
  const double t = detail::frank_tau_positive(std::abs(theta));
  return theta > 0 ? t : -t;
}

/// Inverse of frank_tau_from_theta by bracketed root finding.
inline double frank_theta_from_tau(double tau) {
  detail::require(std::abs(tau) < 1.0, "frank_theta_from_tau: |tau| must be < 1");
  detail::require(tau != 0.0, "frank_theta_from_tau: theta is undefined at tau = 0");
  const double target = std::abs(tau);
  double hi = 1.0;
  while (detail::frank_tau_positive(hi) < target) {
    hi *= 2.0;
    if (hi > 1e300) throw DegenerateInputError("frank_theta_from_tau: tau too close to 1");
  }
  const double lo = hi == 1.0 ? 0.0 : hi / 2.0;
  auto f = [target](double th) { return (th == 0.0 ? 0.0 : detail::frank_tau_positive(th)) - target; };
  std::uintmax_t iters = 300;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  const double theta = 0.5 * (r.first + r.second);
  return tau > 0 ? theta : -theta;
}

enum class CopulaFamily { gaussian, frank };

inline std::string_view to_string(CopulaFamily f) { return f == CopulaFamily::gaussian ? "gaussian" : "frank"; }

inline CopulaFamily copula_family_from_string(std::string_view s) {
  if (s == "gaussian") return CopulaFamily::gaussian;
  if (s == "frank") return CopulaFamily::frank;
  throw ArgumentError("unknown copula family '" + std::string(s) + "'");
}

/// Copula parameter for a given Kendall's tau: rho for Gaussian, theta for
/// Frank (0 for independence).
inline double copula_parameter(CopulaFamily f, double tau) {
  if (f == CopulaFamily::gaussian) return tau_to_rho_gaussian(tau);
  return tau == 0.0 ? 0.0 : frank_theta_from_tau(tau);
}

namespace detail {

inline double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double open_unit(double v) {
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - 0x1.0p-53;
  return std::clamp(v, lo, hi);
}

}  // namespace detail

/// Second coordinate of a Frank pair by conditional inversion, evaluated in
/// the log domain: V = -(1/theta) log(((1-w)e^{-theta u} + w e^{-theta}) /
/// (w + (1-w) e^{-theta u})).
inline double frank_conditional_inverse(double theta, double u, double w) {
  if (std::abs(theta) < 1e-12) return w;
  const double lw = std::log(w);
  const double l1w = std::log1p(-w);
  const double num = detail::log_sum_exp(l1w - theta * u, lw - theta);
  const double den = detail::log_sum_exp(lw, l1w - theta * u);
  return detail::open_unit(-(num - den) / theta);
}

/// One draw of (U1, U2) with uniform margins. `param` is rho or theta.
inline std::array<double, 2> draw_copula(CopulaFamily f, double param, Rng& rng) {
  if (f == CopulaFamily::gaussian) {
    const double a = rng.normal();
    const double b = rng.normal();
    const double c = param * a + std::sqrt(1.0 - param * param) * b;
    return {detail::open_unit(normal_cdf(a)), detail::open_unit(normal_cdf(c))};
  }
  const double u = rng.uniform();
  const double w = rng.uniform();
  return {u, frank_conditional_inverse(param, u, w)};
}

/// Standard-normal scores of one copula draw. The Gaussian case avoids the
/// round trip through the normal cdf.
inline std::array<double, 2> draw_copula_scores(CopulaFamily f, double param, Rng& rng) {
  if (f == CopulaFamily::gaussian) {
    const double a = rng.normal();
    const double b = rng.normal();
    return {a, param * a + std::sqrt(1.0 - param * param) * b};
  }
  const auto uv = draw_copula(f, param, rng);
  return {normal_quantile(uv[0]), normal_quantile(uv[1])};
}

enum class SettingId { s1, s2, s3, s4, s5, s6, d1, d2, d3, custom };

/// How X1, X2 depend on z once the copula draw is made.
enum class Marginal {
  normal_shift,      // N(z_1, 1)
  normal_variance,   // N(0, z_1), z_1 read as a variance
  uniform            // the copula draw itself
};

/// A data-generating process: Z uniform on [0,1]^p, a copula family whose
/// Kendall's tau is tau(z), and conditional margins.
struct SettingSpec {
  SettingId id = SettingId::custom;
  std::string name;
  CopulaFamily family = CopulaFamily::gaussian;
  std::size_t dim = 1;
  Marginal marginal = Marginal::normal_shift;
  std::function<double(std::span<const double>)> tau;
  /// Optional direct parameter map, used instead of inverting tau.
  std::function<double(std::span<const double>)> parameter;

  double copula_param_at(std::span<const double> z) const {
    if (parameter) return parameter(z);
    return copula_parameter(family, tau(z));
  }
};

namespace detail {

inline double s1_tau(std::span<const double> z) { return 3.0 * z[0] * (1.0 - z[0]); }
inline double s2_theta(std::span<const double> z) { return std::tan(std::numbers::pi * z[0] / 2.0); }
inline double s2_tau(std::span<const double> z) { return frank_tau_from_theta(s2_theta(z), true); }

}  // namespace detail

inline SettingSpec make_setting(SettingId id) {
  SettingSpec s;
  s.id = id;
  switch (id) {
    case SettingId::s1:
      s.name = "s1";
      s.family = CopulaFamily::gaussian;
      s.tau = detail::s1_tau;
      break;
    case SettingId::s2:
      s.name = "s2";
      s.family = CopulaFamily::frank;
      s.tau = detail::s2_tau;
      s.parameter = detail::s2_theta;
      break;
    case SettingId::s3:
      s.name = "s3";
      s.family = CopulaFamily::frank;
      s.tau = detail::s1_tau;
      break;
    case SettingId::s4:
      s.name = "s4";
      s.family = CopulaFamily::gaussian;
      s.tau = detail::s2_tau;
      break;
    case SettingId::s5:
      s.name = "s5";
      s.family = CopulaFamily::gaussian;
      s.tau = [](std::span<const double>) { return 0.5; };
      break;
    case SettingId::s6: {
      s.name = "s6";
      s.family = CopulaFamily::frank;
      s.tau = [](std::span<const double>) { return 0.5; };
      const double theta = frank_theta_from_tau(0.5);
      s.parameter = [theta](std::span<const double>) { return theta; };
      break;
    }
    case SettingId::d1:
      s.name = "d1";
      s.dim = 2;
      s.marginal = Marginal::normal_variance;
      s.tau = [](std::span<const double> z) { return 0.75 * (z[0] - z[1]); };
      break;
    case SettingId::d2:
      s.name = "d2";
      s.dim = 2;
      s.marginal = Marginal::normal_variance;
      s.tau = [](std::span<const double> z) {
        return 0.5 * std::cos(2.0 * std::numbers::pi * z[0]) + 0.25 * std::sin(2.0 * std::numbers::pi * z[1]);
      };
      break;
    case SettingId::d3:
      s.name = "d3";
      s.dim = 2;
      s.marginal = Marginal::normal_variance;
      s.tau = [](std::span<const double> z) { return 0.75 * std::tanh(z[0] / std::max(z[1], 1e-12)); };
      break;
    case SettingId::custom:
      throw ArgumentError("make_setting: a custom setting must be built field by field");
  }
  return s;
}

inline SettingId setting_id_from_string(std::string_view s) {
  static constexpr std::array<std::string_view, 9> names{"s1", "s2", "s3", "s4", "s5", "s6", "d1", "d2", "d3"};
  for (std::size_t k = 0; k < names.size(); ++k)
    if (s == names[k]) return static_cast<SettingId>(k);
  throw ArgumentError("unknown setting '" + std::string(s) + "'");
}

inline SettingSpec make_setting(std::string_view name) { return make_setting(setting_id_from_string(name)); }

/// Exact conditional Kendall's tau of the setting at z in [0,1]^p.
inline double true_tau(const SettingSpec& spec, std::span<const double> z) {
  detail::require(z.size() == spec.dim, "true_tau: dimension mismatch");
  for (double v : z) detail::require(v >= 0.0 && v <= 1.0, "true_tau: z outside [0,1]^p");
  return spec.tau(z);
}

namespace detail {

inline std::array<double, 2> draw_xs(const SettingSpec& spec, std::span<const double> z, Rng& rng) {
  const double param = spec.copula_param_at(z);
  switch (spec.marginal) {
    case Marginal::normal_shift: {
      const auto s = draw_copula_scores(spec.family, param, rng);
      return {z[0] + s[0], z[0] + s[1]};
    }
    case Marginal::normal_variance: {
      const auto s = draw_copula_scores(spec.family, param, rng);
      const double sd = std::sqrt(std::max(z[0], 1e-12));
      return {sd * s[0], sd * s[1]};
    }
    case Marginal::uniform: return draw_copula(spec.family, param, rng);
  }
  return {0.0, 0.0};
}

}  // namespace detail

/// n draws with Z uniform on [0,1]^p. Observation i uses the stream
/// rng.derive(i), so the sample does not depend on `threads`.
inline Sample sample_setting(const SettingSpec& spec, std::size_t n, const Rng& rng, unsigned threads = 1) {
  detail::require(n >= 1, "sample_setting: n must be >= 1");
  detail::require(static_cast<bool>(spec.tau), "sample_setting: setting has no tau function");
  std::vector<double> x1(n), x2(n), z(n * spec.dim);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng r = rng.derive(i);
    std::span<double> zi(z.data() + i * spec.dim, spec.dim);
    for (auto& v : zi) v = r.uniform();
    const auto xs = detail::draw_xs(spec, zi, r);
    x1[i] = xs[0];
    x2[i] = xs[1];
  });
  return Sample(std::move(x1), std::move(x2), std::move(z), spec.dim);
}

/// n draws of (X1, X2) given the fixed covariate value z.
inline Sample sample_at(const SettingSpec& spec, std::span<const double> z, std::size_t n, const Rng& rng,
                        unsigned threads = 1) {
  detail::require(n >= 1 && z.size() == spec.dim, "sample_at: bad arguments");
  std::vector<double> x1(n), x2(n), zz(n * spec.dim);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng r = rng.derive(i);
    const auto xs = detail::draw_xs(spec, z, r);
    x1[i] = xs[0];
    x2[i] = xs[1];
    for (std::size_t k = 0; k < spec.dim; ++k) zz[i * spec.dim + k] = z[k];
  });
  return Sample(std::move(x1), std::move(x2), std::move(zz), spec.dim);
}

}  // namespace kreg
