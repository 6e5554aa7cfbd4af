#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Independent reference implementations: plain loops, no shortcuts.

inline double k1(bool gaussian, double u) {
  if (gaussian) return std::exp(-u * u / 2.0) / std::sqrt(2.0 * std::numbers::pi);
  return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
}

struct Obs {
  double x1, x2;
  std::vector<double> z;
};

inline std::vector<double> weights(const std::vector<Obs>& d, const std::vector<double>& z, bool gaussian, double h) {
  std::vector<double> w(d.size());
  double total = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double k = 1;
    for (std::size_t c = 0; c < z.size(); ++c) k *= k1(gaussian, (d[i].z[c] - z[c]) / h) / h;
    w[i] = k;
    total += k;
  }
  for (double& v : w) v /= total;
  return w;
}

inline double g(int variant, const Obs& a, const Obs& b) {
  if (variant == 1) return 4.0 * ((a.x1 < b.x1 && a.x2 < b.x2) ? 1.0 : 0.0) - 1.0;
  if (variant == 3) return 1.0 - 4.0 * ((a.x1 < b.x1 && a.x2 > b.x2) ? 1.0 : 0.0);
  const bool conc = (a.x1 < b.x1 && a.x2 < b.x2) || (a.x1 > b.x1 && a.x2 > b.x2);
  const bool disc = (a.x1 < b.x1 && a.x2 > b.x2) || (a.x1 > b.x1 && a.x2 < b.x2);
  return (conc ? 1.0 : 0.0) - (disc ? 1.0 : 0.0);
}

inline double ckt(const std::vector<Obs>& d, const std::vector<double>& z, bool gaussian, double h, int variant,
                  bool diagonal) {
  const auto w = weights(d, z, gaussian, h);
  double s = 0, sq = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sq += w[i] * w[i];
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (!diagonal && i == j) continue;
      s += w[i] * w[j] * g(variant, d[i], d[j]);
    }
  }
  return diagonal ? s : s / (1.0 - sq);
}

inline double gn(const std::vector<Obs>& d, const std::vector<double>& z, bool gaussian, double h, int variant) {
  const auto w = weights(d, z, gaussian, h);
  auto gt = [&](std::size_t a, std::size_t b) { return 0.5 * (g(variant, d[a], d[b]) + g(variant, d[b], d[a])); };
  double s = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (i == j || j == k || i == k) continue;
        s += w[i] * w[j] * w[k] * gt(i, k) * gt(j, k);
      }
  return s;
}

inline double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                              const Eigen::VectorXd& w, const Eigen::VectorXd& b) {
  return (y - x * b).squaredNorm() / static_cast<double>(x.rows()) + lambda * (w.array() * b.array().abs()).sum();
}

/// Exhaustive grid search, coarse to fine: the whole box at `step0`, then
/// windows of +-20 steps around the incumbent at steps / 10.
inline Eigen::VectorXd lasso_grid(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                                  const Eigen::VectorXd& w, double box, double step0, double final_step) {
  const auto p = x.cols();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
  double best_obj = lasso_objective(x, y, lambda, w, best);
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(p, -box);
  Eigen::VectorXd hi = Eigen::VectorXd::Constant(p, box);
  for (double step = step0; step >= final_step * 0.999; step /= 10.0) {
    std::vector<long> count(static_cast<std::size_t>(p));
    long total = 1;
    for (Eigen::Index j = 0; j < p; ++j) {
      count[static_cast<std::size_t>(j)] = static_cast<long>(std::floor((hi[j] - lo[j]) / step + 0.5)) + 1;
      total *= count[static_cast<std::size_t>(j)];
    }
    Eigen::VectorXd b(p);
    for (long idx = 0; idx < total; ++idx) {
      long r = idx;
      for (Eigen::Index j = 0; j < p; ++j) {
        const long c = count[static_cast<std::size_t>(j)];
        b[j] = lo[j] + step * static_cast<double>(r % c);
        r /= c;
      }
      const double o = lasso_objective(x, y, lambda, w, b);
      if (o < best_obj) {
        best_obj = o;
        best = b;
      }
    }
    for (Eigen::Index j = 0; j < p; ++j) {
      lo[j] = best[j] - 2.0 * step;
      hi[j] = best[j] + 2.0 * step;
    }
  }
  return best;
}

/// Midpoint rule for (1/x) int_0^x t / (e^t - 1) dt.
inline double debye1(double x, long cells = 1000000) {
  const double dt = x / static_cast<double>(cells);
  double s = 0;
  for (long i = 0; i < cells; ++i) {
    const double t = (static_cast<double>(i) + 0.5) * dt;
    s += t / std::expm1(t);
  }
  return s * dt / x;
}

/// Tau-a over all pairs.
inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = (x[i] > x[j]) - (x[i] < x[j]);
      const double b = (y[i] > y[j]) - (y[i] < y[j]);
      s += a * b;
    }
  return s / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

}  // namespace oracle
