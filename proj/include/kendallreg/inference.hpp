#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "kendallreg/ckt.hpp"
#include "kendallreg/error.hpp"
#include "kendallreg/parallel.hpp"
#include "kendallreg/pipeline.hpp"
#include "kendallreg/rng.hpp"

namespace kreg {

/// as_printed: W = n h^p b^T V b with V the estimated covariance.
/// studentized: W = n h^p b^T V^+ b.
enum class WaldVariant { as_printed, studentized };

inline std::string_view to_string(WaldVariant v) { return v == WaldVariant::as_printed ? "as_printed" : "studentized"; }

inline WaldVariant wald_variant_from_string(std::string_view s) {
  if (s == "as_printed") return WaldVariant::as_printed;
  if (s == "studentized") return WaldVariant::studentized;
  throw ArgumentError("unknown Wald variant '" + std::string(s) + "'");
}

/// Degrees of freedom of the reference chi-square. `automatic` is the number
/// of design points for as_printed and rank(V) for studentized.
enum class DofRule { automatic, design_points, coefficients };

inline std::string_view to_string(DofRule d) {
  switch (d) {
    case DofRule::automatic: return "automatic";
    case DofRule::design_points: return "design_points";
    case DofRule::coefficients: return "coefficients";
  }
  return "automatic";
}

inline DofRule dof_rule_from_string(std::string_view s) {
  if (s == "automatic") return DofRule::automatic;
  if (s == "design_points") return DofRule::design_points;
  if (s == "coefficients") return DofRule::coefficients;
  throw ArgumentError("unknown dof rule '" + std::string(s) + "'");
}

struct WaldOptions {
  WaldVariant variant = WaldVariant::as_printed;
  bool remove_intercept = true;
  DofRule dof = DofRule::automatic;
  /// Exact G_n up to this many ordered triples by the literal loop.
  std::uint64_t gn_budget = 30ULL * 30ULL * 30ULL;
  std::optional<std::uint64_t> gn_max_triples;
  std::uint64_t seed = 0;
  /// Relative eigenvalue threshold for rank decisions.
  double rank_tolerance = 1e-10;
};

struct WaldResult {
  double statistic = 0;
  std::size_t dof = 0;
  double p_value = 1;
  WaldVariant variant = WaldVariant::as_printed;
  bool intercept_removed = false;
  std::vector<double> h_hat_diag;
  std::vector<double> gn;
  std::size_t floored = 0;  // design points where G_n - tau_hat^2 < 0
  std::size_t rank = 0;
  std::vector<std::size_t> tested;  // coefficient indices in the statistic
  Eigen::MatrixXd v;                // V_n restricted to `tested`
  double scale = 0;                 // n h^p
};

inline double chi_square_upper_tail(double x, double dof) {
  if (dof <= 0 || x <= 0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

namespace detail {

inline std::vector<Eigen::VectorXd> null_directions(const Eigen::MatrixXd& sym, double rel_tol) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const auto& ev = es.eigenvalues();
  const double top = std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index k = 0; k < ev.size(); ++k)
    if (ev[k] <= rel_tol * top) out.push_back(es.eigenvectors().col(k));
  return out;
}

struct WaldCore {
  Eigen::MatrixXd v;  // full p' x p'
  std::vector<double> h_diag, gn;
  std::size_t floored = 0;
  std::size_t used = 0;
};

inline WaldCore wald_core(const Sample& sample, const FitResult& fit, const WaldOptions& opt) {
  const PointList pts = fit.used_design_points();
  const Eigen::MatrixXd psi = fit.dictionary.design_matrix(pts);
  const Eigen::MatrixXd sigma = psi.transpose() * psi;
  const auto nulls = null_directions(sigma, opt.rank_tolerance);
  if (!nulls.empty()) {
    std::vector<std::string> dirs;
    for (const auto& d : nulls) {
      std::string text;
      for (Eigen::Index j = 0; j < d.size(); ++j) {
        if (std::abs(d[j]) < 1e-6) continue;
        nlohmann::json c = std::round(d[j] * 1e4) / 1e4;
        text += (text.empty() ? "" : " + ") + c.dump() + "*" + fit.dictionary.name(static_cast<std::size_t>(j));
      }
      dirs.push_back(text);
    }
    throw RankDeficiencyError("wald_test: Sigma_n' is singular (" + std::to_string(nulls.size()) +
                                  " null direction(s)); use more design points or a smaller dictionary",
                              std::move(dirs));
  }
  WaldCore core;
  core.used = pts.size();
  const double ik2 = fit.kernel.int_k2();
  GnOptions gopt;
  gopt.variant = fit.variant;
  gopt.exact_triple_budget = opt.gn_budget;
  gopt.max_triples = opt.gn_max_triples;
  Rng base(opt.seed);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto& est = *fit.first_stage[fit.used_points[k]].estimate;
    gopt.seed = base.derive(fit.used_points[k]).key();
    const double g = gn_moment(sample, pts[k], fit.kernel, gopt);
    double excess = g - est.value * est.value;
    if (excess < 0) {
      excess = 0;
      ++core.floored;
    }
    const double lp = fit.transform.derivative(est.value);
    core.gn.push_back(g);
    core.h_diag.push_back(4.0 * ik2 / est.density * lp * lp * excess);
  }
  // sum_{i,j} H_ij psi_i psi_j^T with H_ij = H_ii 1{z'_i = z'_j}.
  const auto p = psi.cols();
  Eigen::MatrixXd middle = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (pts[i] == pts[j])
        middle.noalias() += core.h_diag[i] * psi.row(static_cast<Eigen::Index>(i)).transpose() *
                            psi.row(static_cast<Eigen::Index>(j));
  const Eigen::LDLT<Eigen::MatrixXd> inv(sigma);
  const Eigen::MatrixXd left = inv.solve(middle);
  const Eigen::MatrixXd v = inv.solve(left.transpose()).transpose();
  core.v = 0.5 * (v + v.transpose());
  return core;
}

inline std::vector<std::size_t> tested_indices(const FitResult& fit, bool remove_intercept) {
  std::vector<std::size_t> idx;
  const auto ci = remove_intercept ? fit.dictionary.constant_index() : std::nullopt;
  for (std::size_t j = 0; j < fit.dictionary.size(); ++j)
    if (!ci || *ci != j) idx.push_back(j);
  return idx;
}

inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sym, double rel_tol, std::size_t& rank) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  const auto& ev = es.eigenvalues();
  const double top = ev.size() ? ev.cwiseAbs().maxCoeff() : 0.0;
  Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(ev.size());
  rank = 0;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (top > 0 && ev[k] > rel_tol * top) {
      inv_ev[k] = 1.0 / ev[k];
      ++rank;
    }
  }
  return es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
}

inline WaldResult wald_from_core(const FitResult& fit, const WaldCore& core, const Eigen::VectorXd& beta,
                                 const WaldOptions& opt) {
  WaldResult r;
  r.variant = opt.variant;
  r.tested = tested_indices(fit, opt.remove_intercept);
  r.intercept_removed = r.tested.size() < fit.dictionary.size();
  r.h_hat_diag = core.h_diag;
  r.gn = core.gn;
  r.floored = core.floored;
  const auto m = static_cast<Eigen::Index>(r.tested.size());
  r.v.resize(m, m);
  Eigen::VectorXd b(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    b[a] = beta[static_cast<Eigen::Index>(r.tested[static_cast<std::size_t>(a)])];
    for (Eigen::Index c = 0; c < m; ++c)
      r.v(a, c) = core.v(static_cast<Eigen::Index>(r.tested[static_cast<std::size_t>(a)]),
                         static_cast<Eigen::Index>(r.tested[static_cast<std::size_t>(c)]));
  }
  r.scale = static_cast<double>(fit.n) * std::pow(fit.kernel.bandwidth(), static_cast<double>(fit.kernel.dim()));
  std::size_t rank = 0;
  const Eigen::MatrixXd vplus = pseudo_inverse(r.v, opt.rank_tolerance, rank);
  r.rank = rank;
  if (m == 0) {
    r.statistic = 0;
  } else if (opt.variant == WaldVariant::as_printed) {
    r.statistic = r.scale * b.dot(r.v * b);
  } else {
    r.statistic = std::max(0.0, r.scale * b.dot(vplus * b));
  }
  switch (opt.dof) {
    case DofRule::automatic: r.dof = opt.variant == WaldVariant::as_printed ? core.used : rank; break;
    case DofRule::design_points: r.dof = core.used; break;
    case DofRule::coefficients: r.dof = r.tested.size(); break;
  }
  r.p_value = b.isZero(0.0) ? 1.0 : chi_square_upper_tail(r.statistic, static_cast<double>(r.dof));
  return r;
}

}  // namespace detail

/// Wald test of beta*_{-1} = 0 (or beta* = 0 without an intercept).
inline WaldResult wald_test(const Sample& sample, const FitResult& fit, const WaldOptions& opt = {}) {
  detail::require(sample.size() == fit.n, "wald_test: sample size differs from the fitted sample");
  detail::require(sample.size() >= 3, "wald_test: need n >= 3");
  const auto core = detail::wald_core(sample, fit, opt);
  return detail::wald_from_core(fit, core, fit.beta, opt);
}

struct BootstrapResult {
  double p_value = 1;
  std::size_t replicates = 0;
  std::size_t exceedances = 0;
  std::size_t failed = 0;  // replicates that failed three times
  double observed = 0;
};

/// Nonparametric bootstrap of the Wald statistic: rows are resampled with
/// replacement, the model is refitted, and the statistic is recomputed on
/// beta*_b - beta_hat. p = (1 + #{W*_b >= W}) / (B + 1).
inline BootstrapResult bootstrap_pvalue(const Sample& sample, const FitResult& fit, const FitConfig& config,
                                        const WaldOptions& opt = {}, std::size_t replicates = 100,
                                        std::uint64_t seed = 0, unsigned threads = 1) {
  detail::require(replicates >= 1, "bootstrap_pvalue: B must be >= 1");
  const double observed = wald_test(sample, fit, opt).statistic;
  const std::size_t n = sample.size();
  std::vector<int> outcome(replicates, 0);  // 1 exceed, 0 not, 2 failed
  const Rng base(seed);
  FitConfig cfg = config;
  cfg.threads = 1;
  parallel_for(replicates, threads, [&](std::size_t b) {
    for (int attempt = 0; attempt < 3; ++attempt) {
      Rng r = base.derive(b).derive(static_cast<std::uint64_t>(attempt));
      std::vector<std::size_t> rows(n);
      for (auto& v : rows) v = r.below(n);
      try {
        const Sample boot = sample.subset(rows);
        const FitResult bf = two_step_fit(boot, cfg);
        const auto core = detail::wald_core(boot, bf, opt);
        const Eigen::VectorXd diff = bf.beta - fit.beta;
        const auto w = detail::wald_from_core(bf, core, diff, opt);
        outcome[b] = w.statistic >= observed ? 1 : 0;
        return;
      } catch (const Error&) {
        continue;
      }
    }
    outcome[b] = 2;
  });
  BootstrapResult res;
  res.replicates = replicates;
  res.observed = observed;
  for (int o : outcome) {
    if (o == 2) ++res.failed;
    if (o != 0) ++res.exceedances;
  }
  res.p_value = static_cast<double>(1 + res.exceedances) / static_cast<double>(replicates + 1);
  return res;
}

/// Inputs of the finite-sample bound for the fixed-design case.
struct TheoryConstants {
  int alpha = 2;
  int p = 1;
  double f_min = 1, f_max = 1;
  double int_k2 = 0.6;
  double c_k = 0.75;
  double c_k_alpha = 1;
  double c_xz_alpha = 1;
  double c_psi = 1;
  double c_lambda_prime = 1;
  double gamma = 4;
  double kappa = 1;  // kappa(s, 3)
  double s = 1;

  void validate() const {
    detail::require(alpha >= 1 && p >= 1, "TheoryConstants: alpha and p must be >= 1");
    for (double v : {f_min, f_max, int_k2, c_k, c_k_alpha, c_xz_alpha, c_psi, c_lambda_prime, kappa, s})
      detail::require(v > 0 && std::isfinite(v), "TheoryConstants: constants must be positive and finite");
    detail::require(f_min <= f_max, "TheoryConstants: f_min > f_max");
    detail::require(gamma >= 4, "TheoryConstants: gamma must be >= 4");
  }

  double c1() const { return f_min * f_min / (32.0 * f_max * int_k2 + (8.0 / 3.0) * c_k * f_min); }
  double c3() const {
    return (64.0 / 3.0) * c_psi * c_lambda_prime * c_k * c_k * (f_min * f_min + 8.0 * f_max * f_max) /
           std::pow(f_min, 4);
  }
  double c2() const {
    const double a = 16.0 * c_psi * c_lambda_prime * (f_min * f_min + 8.0 * f_max * f_max) * f_max * int_k2;
    return a * a / std::pow(f_min, 8);
  }
};

struct FiniteSampleBound {
  double c1 = 0, c2 = 0, c3 = 0;
  double lambda = 0;                 // gamma * t
  double radius_pred = 0;            // bound on ||Z'(beta_hat - beta*)||_{n'}
  double radius_q_coefficient_2 = 0; // 4^{2/2} (gamma + 1)
  double prob_lower_bound = 0;
  double prob_term_density = 0;      // 2 n' exp(-n h^p C1)
  double prob_term_tau = 0;          // 2 n' exp(-(n-1) h^{2p} t^2 / (C2 + C3 t))
  double h_condition_rhs = 0;
  bool h_condition_ok = false;
  double t = 0, h = 0, gamma = 0, s = 0, kappa = 0;

  /// Bound on |beta_hat - beta*|_q for 1 <= q <= 2.
  double radius_q(double q) const {
    detail::require(q >= 1 && q <= 2, "radius_q: q must lie in [1, 2]");
    return std::pow(4.0, 2.0 / q) * (gamma + 1.0) * t * std::pow(s, 1.0 / q) / (kappa * kappa);
  }
};

inline double factorial(int a) {
  double f = 1;
  for (int k = 2; k <= a; ++k) f *= k;
  return f;
}

/// Evaluates every displayed quantity of the fixed-design bound. The
/// probability bound is reported as is, even when negative.
inline FiniteSampleBound finite_sample_bound(const TheoryConstants& c, double n, double n_prime, double t, double h) {
  c.validate();
  detail::require(n >= 2 && n_prime >= 1, "finite_sample_bound: need n >= 2 and n' >= 1");
  detail::require(t > 0 && h > 0, "finite_sample_bound: t and h must be > 0");
  FiniteSampleBound b;
  b.c1 = c.c1();
  b.c2 = c.c2();
  b.c3 = c.c3();
  b.t = t;
  b.h = h;
  b.gamma = c.gamma;
  b.s = c.s;
  b.kappa = c.kappa;
  b.lambda = c.gamma * t;
  b.radius_pred = 4.0 * (c.gamma + 1.0) * t * std::sqrt(c.s) / c.kappa;
  b.radius_q_coefficient_2 = 4.0 * (c.gamma + 1.0);
  const double hp = std::pow(h, c.p);
  b.prob_term_density = 2.0 * n_prime * std::exp(-n * hp * b.c1);
  b.prob_term_tau = 2.0 * n_prime * std::exp(-(n - 1.0) * hp * hp * t * t / (b.c2 + b.c3 * t));
  b.prob_lower_bound = 1.0 - b.prob_term_density - b.prob_term_tau;
  const double af = factorial(c.alpha);
  const double fm2 = c.f_min * c.f_min;
  const double first = c.f_min * af / (4.0 * c.c_k_alpha);
  const double second = std::pow(c.f_min, 4) * af * t /
                        (8.0 * c.c_psi * c.c_lambda_prime * (fm2 + 8.0 * c.f_max * c.f_max) * c.c_xz_alpha);
  b.h_condition_rhs = std::min(first, second);
  b.h_condition_ok = std::pow(h, c.alpha) <= b.h_condition_rhs;
  return b;
}

struct RateBound {
  double t = 0, h = 0, c_h = 0, lambda = 0;
  double radius_pred = 0;
  double radius_q_coefficient_2 = 0;  // 5 * 4^{2/2}
  double prob_lower_bound = 0;
  FiniteSampleBound base;             // the fixed-design bound at (t, h)
};

/// Rates t = (n-1)^{-alpha(1-eps)/(2 alpha + 2p)}, h = c_h (n-1)^{-1/(2 alpha + 2p)}, lambda = 4t.
inline RateBound rate_bound(TheoryConstants c, double n, double n_prime, double eps) {
  detail::require(eps > 0 && eps < 1, "rate_bound: eps must lie in (0, 1)");
  c.gamma = 4;
  c.validate();
  RateBound r;
  const double m = n - 1.0;
  const double denom = 2.0 * c.alpha + 2.0 * c.p;
  const double rate = c.alpha * (1.0 - eps) / denom;
  r.t = std::pow(m, -rate);
  const double fm2 = c.f_min * c.f_min;
  r.c_h = std::pow(std::pow(c.f_min, 4) * factorial(c.alpha) /
                       (2.0 * c.c_psi * c.c_lambda_prime * (fm2 + 16.0 * c.f_max * c.f_max) * c.c_xz_alpha),
                   1.0 / c.alpha);
  r.h = r.c_h * std::pow(m, -1.0 / denom);
  r.lambda = 4.0 * r.t;
  r.radius_pred = 20.0 * std::sqrt(c.s) / c.kappa * r.t;
  r.radius_q_coefficient_2 = 5.0 * 4.0;
  const double chp = std::pow(r.c_h, c.p);
  r.prob_lower_bound = 1.0 - 2.0 * n_prime * std::exp(-c.c1() * chp * std::pow(m, (2.0 * c.alpha + c.p) / denom)) -
                       2.0 * n_prime * std::exp(-chp * chp * std::pow(m, 2.0 * c.alpha * eps / denom) /
                                                (c.c2() + c.c3() * r.t));
  r.base = finite_sample_bound(c, n, n_prime, r.t, r.h);
  return r;
}

/// Random-search estimate of the restricted eigenvalue
/// kappa(s, c0) = min over |J0| <= s and cone directions of |Z d|_2 / (sqrt(n') |d|_2).
/// The minimum found is an upper bound on kappa. Draws alternate between
/// fresh cone directions and perturbations of the best direction so far;
/// a longer run extends a shorter one with the same seed.
inline double estimate_re_constant(const Eigen::MatrixXd& design, std::size_t s, double c0 = 3.0,
                                   std::size_t draws = 10000, std::uint64_t seed = 0) {
  const auto p = static_cast<std::size_t>(design.cols());
  detail::require(p >= 1 && design.rows() >= 1, "estimate_re_constant: empty design");
  detail::require(s >= 1 && s <= p, "estimate_re_constant: need 1 <= s <= p'");
  detail::require(c0 > 0, "estimate_re_constant: c0 must be > 0");
  detail::require(draws >= 1, "estimate_re_constant: draws must be >= 1");
  const double sqrt_n = std::sqrt(static_cast<double>(design.rows()));

  // Subsets of size exactly s suffice: the cone grows with J0.
  std::vector<std::vector<std::size_t>> subsets;
  const double count = boost::math::binomial_coefficient<double>(static_cast<unsigned>(p), static_cast<unsigned>(s));
  const bool enumerate = count <= 1e5;
  if (enumerate) {
    std::vector<std::size_t> cur(s);
    std::iota(cur.begin(), cur.end(), std::size_t{0});
    for (;;) {
      subsets.push_back(cur);
      std::size_t k = s;
      while (k > 0 && cur[k - 1] == p - s + k - 1) --k;
      if (k == 0) break;
      ++cur[k - 1];
      for (std::size_t j = k; j < s; ++j) cur[j] = cur[j - 1] + 1;
    }
  }
  Rng rng(seed);
  auto ratio = [&](const Eigen::VectorXd& d) { return (design * d).norm() / (sqrt_n * d.norm()); };
  auto project = [&](Eigen::VectorXd& d, const std::vector<char>& in_j) {
    double lj = 0, lc = 0;
    for (std::size_t k = 0; k < p; ++k) (in_j[k] ? lj : lc) += std::abs(d[static_cast<Eigen::Index>(k)]);
    if (lc > c0 * lj && lc > 0)
      for (std::size_t k = 0; k < p; ++k)
        if (!in_j[k]) d[static_cast<Eigen::Index>(k)] *= c0 * lj / lc;
  };

  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_d;
  std::vector<char> best_j;
  static constexpr double scales[] = {1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4};
  for (std::size_t t = 0; t < draws; ++t) {
    const bool local = best_d.size() > 0 && (t % 2 == 1);
    std::vector<char> in_j(p, 0);
    Eigen::VectorXd d(static_cast<Eigen::Index>(p));
    if (local) {
      in_j = best_j;
      const double sc = scales[rng.below(std::size(scales))] * best_d.norm() / std::sqrt(static_cast<double>(p));
      for (std::size_t k = 0; k < p; ++k) d[static_cast<Eigen::Index>(k)] = best_d[static_cast<Eigen::Index>(k)] + sc * rng.normal();
    } else {
      if (enumerate) {
        for (auto k : subsets[(t / 2) % subsets.size()]) in_j[k] = 1;
      } else {
        std::vector<std::size_t> all(p);
        std::iota(all.begin(), all.end(), std::size_t{0});
        for (std::size_t k = 0; k < s; ++k) std::swap(all[k], all[k + rng.below(p - k)]);
        for (std::size_t k = 0; k < s; ++k) in_j[all[k]] = 1;
      }
      double lj = 0;
      for (std::size_t k = 0; k < p; ++k)
        if (in_j[k]) {
          d[static_cast<Eigen::Index>(k)] = rng.normal();
          lj += std::abs(d[static_cast<Eigen::Index>(k)]);
        }
      const bool sparse = rng.below(3) == 0;
      double lc = 0;
      for (std::size_t k = 0; k < p; ++k)
        if (!in_j[k]) {
          d[static_cast<Eigen::Index>(k)] = sparse ? 0.0 : rng.normal();
          lc += std::abs(d[static_cast<Eigen::Index>(k)]);
        }
      if (lc > 0) {
        const double target = c0 * lj * rng.uniform();
        for (std::size_t k = 0; k < p; ++k)
          if (!in_j[k]) d[static_cast<Eigen::Index>(k)] *= target / lc;
      }
    }
    project(d, in_j);
    if (!(d.norm() > 0)) continue;
    const double r = ratio(d);
    if (r < best) {
      best = r;
      best_d = d / d.norm();
      best_j = in_j;
    }
  }
  return best;
}

}  // namespace kreg
