#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kendallreg/error.hpp"

namespace kreg {

inline double soft_threshold(double x, double t) noexcept {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// minimize (1/n') |Y - Z beta|_2^2 + lambda * sum_j w_j |beta_j|.
/// Empty weights mean w = 1. A weight of +inf pins the coordinate to 0 and a
/// weight of 0 leaves it unpenalized.
struct LassoProblem {
  Eigen::MatrixXd design;
  Eigen::VectorXd response;
  double lambda = 0.0;
  Eigen::VectorXd weights;

  Eigen::Index rows() const noexcept { return design.rows(); }
  Eigen::Index cols() const noexcept { return design.cols(); }
  double weight(Eigen::Index j) const noexcept { return weights.size() == 0 ? 1.0 : weights[j]; }

  void validate() const {
    detail::require(rows() >= 1 && cols() >= 1, "LassoProblem: empty design");
    detail::require(response.size() == rows(), "LassoProblem: response length != design rows");
    detail::require(std::isfinite(lambda) && lambda >= 0, "LassoProblem: lambda must be >= 0");
    detail::require(design.allFinite() && response.allFinite(), "LassoProblem: NaN or inf in inputs");
    if (weights.size() != 0) {
      detail::require(weights.size() == cols(), "LassoProblem: weights length != columns");
      for (Eigen::Index j = 0; j < weights.size(); ++j)
        detail::require(weights[j] >= 0 && !std::isnan(weights[j]), "LassoProblem: negative weight");
    }
  }

  /// ||v||_{n'} = |v|_2 / sqrt(n').
  static double empirical_norm(const Eigen::VectorXd& v) {
    return v.norm() / std::sqrt(static_cast<double>(v.size()));
  }

  double penalty(const Eigen::VectorXd& beta) const {
    double p = 0.0;
    for (Eigen::Index j = 0; j < cols(); ++j)
      if (beta[j] != 0.0) p += weight(j) * std::abs(beta[j]);
    return lambda * p;
  }

  double objective(const Eigen::VectorXd& beta) const {
    const double rss = (response - design * beta).squaredNorm();
    return rss / static_cast<double>(rows()) + penalty(beta);
  }
};

struct LassoOptions {
  double tolerance = 1e-8;
  long max_iters = 100000;
  std::optional<Eigen::VectorXd> warm_start;
  /// Coordinate visiting order; empty means 0..p'-1.
  std::vector<Eigen::Index> order;
};

struct LassoSolution {
  Eigen::VectorXd beta;
  double objective = 0;
  double kkt_residual = 0;
  double max_update = 0;
  long iterations = 0;
  bool converged = false;

  std::size_t nonzeros() const {
    return static_cast<std::size_t>((beta.array() != 0.0).count());
  }
};

/// Largest violation of the subgradient optimality conditions; 0 iff optimal.
inline double kkt_residual(const LassoProblem& pb, const Eigen::VectorXd& beta) {
  const double scale = 2.0 / static_cast<double>(pb.rows());
  const Eigen::VectorXd grad = scale * (pb.design.transpose() * (pb.response - pb.design * beta));
  double worst = 0.0;
  for (Eigen::Index j = 0; j < pb.cols(); ++j) {
    const double w = pb.weight(j);
    double v;
    if (std::isinf(w)) {
      v = beta[j] == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else if (beta[j] != 0.0) {
      v = std::abs(grad[j] - pb.lambda * w * (beta[j] > 0 ? 1.0 : -1.0));
    } else {
      v = std::max(std::abs(grad[j]) - pb.lambda * w, 0.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

namespace detail {

/// Zero on penalized coordinates, least squares on the unpenalized ones.
inline Eigen::VectorXd null_model(const LassoProblem& pb) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(pb.cols());
  std::vector<Eigen::Index> free;
  for (Eigen::Index j = 0; j < pb.cols(); ++j)
    if (pb.weight(j) == 0.0) free.push_back(j);
  if (free.empty()) return beta;
  Eigen::MatrixXd xf(pb.rows(), static_cast<Eigen::Index>(free.size()));
  for (std::size_t k = 0; k < free.size(); ++k) xf.col(static_cast<Eigen::Index>(k)) = pb.design.col(free[k]);
  const Eigen::VectorXd bf = xf.completeOrthogonalDecomposition().solve(pb.response);
  for (std::size_t k = 0; k < free.size(); ++k) beta[free[k]] = bf[static_cast<Eigen::Index>(k)];
  return beta;
}

}  // namespace detail

/// Smallest lambda at which the penalized coordinates are all zero. Unpenalized
/// coordinates (weight 0) are first fitted by least squares.
inline double lambda_max(const LassoProblem& pb) {
  pb.validate();
  const Eigen::VectorXd r = pb.response - pb.design * detail::null_model(pb);
  const double scale = 2.0 / static_cast<double>(pb.rows());
  double best = 0.0;
  for (Eigen::Index j = 0; j < pb.cols(); ++j) {
    const double w = pb.weight(j);
    if (w == 0.0 || std::isinf(w)) continue;
    best = std::max(best, std::abs(scale * pb.design.col(j).dot(r)) / w);
  }
  return best;
}

namespace detail {

// Solves the stationarity equations on the current support with fixed signs.
// If the solution leaves the current orthant, moves to the first sign change,
// drops that coordinate and repeats, so the objective never increases.
inline std::optional<Eigen::VectorXd> polish(const LassoProblem& pb, const Eigen::VectorXd& beta) {
  const double n = static_cast<double>(pb.rows());
  Eigen::VectorXd cur = beta;
  for (;;) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index j = 0; j < pb.cols(); ++j)
      if (cur[j] != 0.0) act.push_back(j);
    if (act.empty()) return cur;
    const auto a = static_cast<Eigen::Index>(act.size());
    Eigen::MatrixXd xa(pb.rows(), a);
    for (Eigen::Index k = 0; k < a; ++k) xa.col(k) = pb.design.col(act[static_cast<std::size_t>(k)]);
    Eigen::VectorXd rhs = xa.transpose() * pb.response;
    for (Eigen::Index k = 0; k < a; ++k) {
      const Eigen::Index j = act[static_cast<std::size_t>(k)];
      rhs[k] -= 0.5 * n * pb.lambda * pb.weight(j) * (cur[j] > 0 ? 1.0 : -1.0);
    }
    // X P = Q R, so X^T X b = rhs becomes R^T R (P^T b) = P^T rhs.
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xa);
    if (qr.rank() < a) return std::nullopt;
    const auto r = qr.matrixR().topLeftCorner(a, a).triangularView<Eigen::Upper>();
    Eigen::VectorXd u = qr.colsPermutation().transpose() * rhs;
    r.transpose().solveInPlace(u);
    r.solveInPlace(u);
    const Eigen::VectorXd sol = qr.colsPermutation() * u;
    if (!sol.allFinite()) return std::nullopt;
    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index k = 0; k < a; ++k) {
      const Eigen::Index j = act[static_cast<std::size_t>(k)];
      if (pb.weight(j) == 0.0 || sol[k] * cur[j] > 0.0) continue;
      const double t = cur[j] / (cur[j] - sol[k]);
      if (t < step) {
        step = t;
        blocking = j;
      }
    }
    for (Eigen::Index k = 0; k < a; ++k) {
      const Eigen::Index j = act[static_cast<std::size_t>(k)];
      cur[j] += step * (sol[k] - cur[j]);
    }
    if (blocking < 0) return cur;
    cur[blocking] = 0.0;
  }
}

}  // namespace detail

/// Cyclic coordinate descent. After each sweep an exact step on the current
/// support/sign pattern is taken when it does not increase the objective;
/// convergence is declared once the KKT residual is within tolerance.
inline LassoSolution fit(const LassoProblem& pb, const LassoOptions& opt = {}) {
  pb.validate();
  const Eigen::Index p = pb.cols();
  const double n = static_cast<double>(pb.rows());

  std::vector<Eigen::Index> order = opt.order;
  if (order.empty()) {
    order.resize(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
  }
  detail::require(order.size() == static_cast<std::size_t>(p), "fit: order must list every coordinate");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  if (opt.warm_start) {
    detail::require(opt.warm_start->size() == p, "fit: warm start has wrong length");
    beta = *opt.warm_start;
    for (Eigen::Index j = 0; j < p; ++j)
      if (std::isinf(pb.weight(j))) beta[j] = 0.0;
  }
  Eigen::VectorXd col_sq(p);
  for (Eigen::Index j = 0; j < p; ++j) col_sq[j] = 2.0 * pb.design.col(j).squaredNorm() / n;

  LassoSolution sol;
  if (pb.lambda > 0.0 && pb.lambda >= lambda_max(pb)) {
    sol.beta = detail::null_model(pb);
    sol.objective = pb.objective(sol.beta);
    sol.kkt_residual = kkt_residual(pb, sol.beta);
    sol.converged = sol.kkt_residual <= opt.tolerance;
    return sol;
  }
  Eigen::VectorXd resid = pb.response - pb.design * beta;
  for (long sweep = 1; sweep <= opt.max_iters; ++sweep) {
    double max_update = 0.0;
    for (Eigen::Index j : order) {
      const double w = pb.weight(j);
      const double old = beta[j];
      double next = 0.0;
      if (!std::isinf(w) && col_sq[j] > 0.0) {
        const double rho = 2.0 * pb.design.col(j).dot(resid) / n + col_sq[j] * old;
        next = soft_threshold(rho, pb.lambda * w) / col_sq[j];
      }
      if (next != old) {
        resid -= (next - old) * pb.design.col(j);
        beta[j] = next;
        max_update = std::max(max_update, std::abs(next - old));
      }
    }
    sol.iterations = sweep;
    sol.max_update = max_update;

    if (max_update < opt.tolerance) {
      // Recompute the residual to shed accumulated drift before certifying.
      resid = pb.response - pb.design * beta;
      if (kkt_residual(pb, beta) <= opt.tolerance) {
        sol.converged = true;
        break;
      }
    }
    if (auto cand = detail::polish(pb, beta)) {
      const double before = pb.objective(beta);
      const double after = pb.objective(*cand);
      if (after <= before + 1e-12 * (1.0 + std::abs(before))) {
        beta = *cand;
        resid = pb.response - pb.design * beta;
        if (kkt_residual(pb, beta) <= opt.tolerance) {
          sol.converged = true;
          break;
        }
      }
    }
  }
  sol.beta = beta;
  sol.objective = pb.objective(beta);
  sol.kkt_residual = kkt_residual(pb, beta);
  if (sol.kkt_residual > opt.tolerance) sol.converged = false;
  return sol;
}

/// `count` log-spaced values from lambda_max down to lambda_max * ratio.
inline std::vector<double> default_lambda_grid(double lmax, std::size_t count = 50, double ratio = 1e-3) {
  detail::require(count >= 1 && ratio > 0 && ratio <= 1, "default_lambda_grid: bad arguments");
  if (!(lmax > 0)) return {0.0};
  std::vector<double> grid(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    grid[k] = lmax * std::pow(ratio, t);
  }
  return grid;
}

/// Warm-started fits along `lambdas` (in the given order).
inline std::vector<LassoSolution> lasso_path(LassoProblem pb, const std::vector<double>& lambdas,
                                             LassoOptions opt = {}) {
  std::vector<LassoSolution> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) {
    pb.lambda = l;
    out.push_back(fit(pb, opt));
    opt.warm_start = out.back().beta;
  }
  return out;
}

/// Penalty weights 1/|pilot_j|^delta, infinite where the pilot is zero.
inline Eigen::VectorXd adaptive_weights(const Eigen::VectorXd& pilot, double delta) {
  detail::require(delta > 0, "adaptive weights: delta must be > 0");
  if ((pilot.array() == 0.0).all())
    throw DegenerateInputError("adaptive lasso: every pilot coefficient is zero");
  Eigen::VectorXd w(pilot.size());
  for (Eigen::Index j = 0; j < pilot.size(); ++j)
    w[j] = pilot[j] == 0.0 ? std::numeric_limits<double>::infinity() : std::pow(std::abs(pilot[j]), -delta);
  return w;
}

/// Lasso with the random tuning parameter lambda_j = mu / |pilot_j|^delta.
inline LassoSolution fit_adaptive(const Eigen::MatrixXd& design, const Eigen::VectorXd& response, double mu,
                                  double delta, const Eigen::VectorXd& pilot, const LassoOptions& opt = {}) {
  detail::require(pilot.size() == design.cols(), "fit_adaptive: pilot length != columns");
  detail::require(mu >= 0, "fit_adaptive: mu must be >= 0");
  LassoProblem pb{design, response, mu, adaptive_weights(pilot, delta)};
  return fit(pb, opt);
}

}  // namespace kreg
