#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "kendallreg/ckt.hpp"
#include "kendallreg/dictionary.hpp"
#include "kendallreg/error.hpp"
#include "kendallreg/kernel.hpp"
#include "kendallreg/lasso.hpp"
#include "kendallreg/rng.hpp"
#include "kendallreg/transform.hpp"

namespace kreg {

/// Per-coordinate penalty weights of the second stage. `column_sd` weighs
/// each column by its standard deviation over the design points and leaves
/// the constant column unpenalized, which is the same as standardizing the
/// columns and fitting a free intercept.
enum class PenaltyScaling { uniform, column_sd };

inline std::string_view to_string(PenaltyScaling p) { return p == PenaltyScaling::uniform ? "uniform" : "column_sd"; }

inline PenaltyScaling penalty_scaling_from_string(std::string_view s) {
  if (s == "uniform") return PenaltyScaling::uniform;
  if (s == "column_sd") return PenaltyScaling::column_sd;
  throw ArgumentError("unknown penalty scaling '" + std::string(s) + "'");
}

/// Scale in which the cross-validation error compares the held-out tau_hat
/// with the fitted model: `tau` uses Lambda^-1(psi^T beta), `transformed`
/// uses psi^T beta directly.
enum class CvScale { tau, transformed };

inline std::string_view to_string(CvScale s) { return s == CvScale::tau ? "tau" : "transformed"; }

inline CvScale cv_scale_from_string(std::string_view s) {
  if (s == "tau") return CvScale::tau;
  if (s == "transformed") return CvScale::transformed;
  throw ArgumentError("unknown cv scale '" + std::string(s) + "'");
}

struct CvConfig {
  std::size_t folds = 5;
  /// Explicit lambda grid; empty means a log-spaced path below lambda_max.
  std::vector<double> grid;
  std::size_t grid_size = 50;
  double grid_ratio = 1e-3;
  CvScale scale = CvScale::tau;
  /// Estimate tau_hat on the complement and beta on the block instead.
  bool swap_roles = false;
  std::uint64_t seed = 0;
};

struct FitConfig {
  KernelFamily kernel = KernelFamily::epanechnikov;
  /// Explicit bandwidth; otherwise multiplier * sd(Z) * n^(-1/(4+p)).
  std::optional<double> bandwidth;
  double bandwidth_multiplier = 1.0;
  TransformSpec transform;
  Dictionary dictionary = dict::constant();
  PointList design_points;
  /// Optional covariate box [lo, hi]^p that design points must lie in.
  std::optional<std::pair<double, double>> box;
  /// Fixed lambda, or lambda_multiplier * lambda_cv when lambda_cv is set.
  double lambda = 0.0;
  bool lambda_cv = false;
  double lambda_multiplier = 1.0;
  Concordance variant = Concordance::g2;
  bool include_diagonal = true;
  PenaltyScaling penalty = PenaltyScaling::uniform;
  CvConfig cv;
  LassoOptions lasso;
  unsigned threads = 1;
};

struct CvResult {
  double lambda_cv = 0;
  std::vector<double> grid;           // descending
  std::vector<double> total_error;    // summed over folds, per grid value
  std::vector<std::vector<double>> fold_error;  // [fold][grid]
  std::vector<std::size_t> skipped_folds;
  std::vector<std::vector<std::size_t>> blocks;
};

struct FitTiming {
  double first_stage = 0;
  double cross_validation = 0;
  double second_stage = 0;
};

struct FitResult {
  Eigen::VectorXd beta;
  double lambda_used = 0;
  std::optional<double> lambda_cv;
  KernelSpec kernel{KernelFamily::epanechnikov, 1.0, 1};
  TransformSpec transform;
  Dictionary dictionary = dict::constant();
  Concordance variant = Concordance::g2;
  bool include_diagonal = true;
  PenaltyScaling penalty = PenaltyScaling::uniform;
  Eigen::VectorXd penalty_weights;
  std::size_t n = 0;
  PointList design_points;
  std::vector<CktPointResult> first_stage;  // one per design point
  std::vector<std::size_t> used_points;     // design points entering the regression
  std::size_t excluded_points = 0;
  std::size_t clip_events = 0;
  LassoSolution lasso;
  std::optional<CvResult> cv;
  FitTiming timing;

  bool converged() const noexcept { return lasso.converged; }

  /// psi(z)^T beta over the nonzero coefficients only.
  double linear_predictor(std::span<const double> z) const {
    double y = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j)
      if (beta[j] != 0.0) y += beta[j] * dictionary.evaluate_one(static_cast<std::size_t>(j), z);
    return y;
  }

  /// Y_i = Lambda(tau_hat(z'_i)) at the used design points.
  Eigen::VectorXd response() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(used_points.size()));
    for (std::size_t k = 0; k < used_points.size(); ++k)
      y[static_cast<Eigen::Index>(k)] = transform.apply(first_stage[used_points[k]].estimate->value);
    return y;
  }

  PointList used_design_points() const {
    PointList p;
    for (auto i : used_points) p.push_back(design_points[i]);
    return p;
  }

  /// xi_i = Y_i - psi(z'_i)^T beta.
  Eigen::VectorXd residuals() const {
    return response() - dictionary.design_matrix(used_design_points()) * beta;
  }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void check_config(const Sample& sample, const FitConfig& cfg) {
  detail::require(sample.size() >= 2, "two_step_fit: need n >= 2");
  detail::require(!cfg.design_points.empty(), "two_step_fit: at least one design point is required");
  detail::require(cfg.dictionary.input_dim() == sample.dim(),
                  "two_step_fit: dictionary dimension " + std::to_string(cfg.dictionary.input_dim()) +
                      " != covariate dimension " + std::to_string(sample.dim()));
  for (const auto& p : cfg.design_points) {
    detail::require(p.size() == sample.dim(), "two_step_fit: design point dimension mismatch");
    if (cfg.box)
      for (double v : p)
        detail::require(v >= cfg.box->first && v <= cfg.box->second, "two_step_fit: design point outside the box");
  }
  detail::require(cfg.lambda >= 0 && std::isfinite(cfg.lambda), "two_step_fit: lambda must be >= 0");
  detail::require(cfg.lambda_multiplier >= 0, "two_step_fit: lambda multiplier must be >= 0");
  if (cfg.bandwidth) detail::require(*cfg.bandwidth > 0, "two_step_fit: bandwidth must be > 0");
}

inline KernelSpec kernel_for(const Sample& s, const FitConfig& cfg) {
  const double h = cfg.bandwidth ? *cfg.bandwidth : rule_of_thumb_bandwidth(s, cfg.bandwidth_multiplier);
  return KernelSpec(cfg.kernel, h, s.dim());
}

struct Stage1 {
  std::vector<CktPointResult> points;
  std::vector<std::size_t> used;
  std::size_t clips = 0;
};

inline Stage1 first_stage(const Sample& s, const KernelSpec& k, const FitConfig& cfg) {
  Stage1 st;
  st.points = ckt_batch(s, cfg.design_points, k, {cfg.variant, cfg.include_diagonal}, cfg.threads);
  for (std::size_t i = 0; i < st.points.size(); ++i) {
    if (!st.points[i].ok()) continue;
    st.used.push_back(i);
    if (st.points[i].estimate->clipped) ++st.clips;
  }
  return st;
}

inline Eigen::VectorXd penalty_weights(const Eigen::MatrixXd& x, const Dictionary& d, PenaltyScaling p) {
  Eigen::VectorXd w = Eigen::VectorXd::Ones(x.cols());
  if (p == PenaltyScaling::uniform) return w;
  bool free_used = false;
  const auto ci = d.constant_index();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().mean());
    if (sd > 1e-12 * (1.0 + std::abs(mean))) {
      w[j] = sd;
    } else if (ci && static_cast<Eigen::Index>(*ci) == j && !free_used) {
      w[j] = 0.0;
      free_used = true;
    } else {
      w[j] = std::numeric_limits<double>::infinity();
    }
  }
  return w;
}

struct Problem {
  LassoProblem lasso;
  std::vector<std::size_t> used;
};

inline Problem build_problem(const Stage1& st, const FitConfig& cfg) {
  Problem pb;
  pb.used = st.used;
  PointList pts;
  Eigen::VectorXd y(static_cast<Eigen::Index>(st.used.size()));
  for (std::size_t k = 0; k < st.used.size(); ++k) {
    pts.push_back(cfg.design_points[st.used[k]]);
    y[static_cast<Eigen::Index>(k)] = cfg.transform.apply(st.points[st.used[k]].estimate->value);
  }
  pb.lasso.design = cfg.dictionary.design_matrix(pts);
  pb.lasso.response = std::move(y);
  pb.lasso.weights = penalty_weights(pb.lasso.design, cfg.dictionary, cfg.penalty);
  return pb;
}

/// Contiguous blocks of a seeded shuffle of 0..n-1.
inline std::vector<std::vector<std::size_t>> cv_blocks(std::size_t n, std::size_t folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::vector<std::size_t>> blocks(folds);
  for (std::size_t k = 0; k < folds; ++k) {
    const std::size_t lo = k * n / folds, hi = (k + 1) * n / folds;
    blocks[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi));
    std::sort(blocks[k].begin(), blocks[k].end());
  }
  return blocks;
}

}  // namespace detail

/// Partition of the sample used by cross_validate_lambda.
inline std::vector<std::vector<std::size_t>> cv_partition(std::size_t n, std::size_t folds, std::uint64_t seed) {
  detail::require(folds >= 2 && folds <= n, "cv_partition: need 2 <= folds <= n");
  return detail::cv_blocks(n, folds, seed);
}

/// Cross-validation for lambda. For each block D_k, tau_hat^(k) is estimated
/// on D_k and beta^(-k)(lambda) on the rest (roles reversed with swap_roles);
/// the fold error is the sum over design points valid in both of
/// (tau_hat^(k) - prediction)^2. Returns the grid value minimizing the sum
/// over folds (the largest such value on ties). When the bandwidth is not
/// fixed it is recomputed on each subsample with the configured multiplier.
inline CvResult cross_validate_lambda(const Sample& sample, const FitConfig& cfg,
                                      std::vector<double> grid = {}) {
  detail::check_config(sample, cfg);
  const std::size_t folds = cfg.cv.folds;
  detail::require(folds >= 2, "cross_validate_lambda: need at least 2 folds");
  detail::require(folds <= sample.size(), "cross_validate_lambda: more folds than observations");
  if (grid.empty()) grid = cfg.cv.grid;
  if (grid.empty()) {
    const auto st = detail::first_stage(sample, detail::kernel_for(sample, cfg), cfg);
    if (st.used.empty()) throw EstimationError("cross_validate_lambda: no design point has a valid first stage");
    const auto pb = detail::build_problem(st, cfg);
    grid = default_lambda_grid(lambda_max(pb.lasso), cfg.cv.grid_size, cfg.cv.grid_ratio);
  }
  for (double l : grid) detail::require(l >= 0 && std::isfinite(l), "cross_validate_lambda: grid values must be >= 0");
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  CvResult res;
  res.grid = grid;
  res.blocks = detail::cv_blocks(sample.size(), folds, cfg.cv.seed);
  res.total_error.assign(grid.size(), 0.0);
  res.fold_error.assign(folds, std::vector<double>(grid.size(), 0.0));

  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < folds; ++j)
      if (j != k) rest.insert(rest.end(), res.blocks[j].begin(), res.blocks[j].end());
    std::sort(rest.begin(), rest.end());
    const Sample block = sample.subset(res.blocks[k]);
    const Sample other = sample.subset(rest);
    const Sample& tau_data = cfg.cv.swap_roles ? other : block;
    const Sample& beta_data = cfg.cv.swap_roles ? block : other;
    try {
      const auto held = detail::first_stage(tau_data, detail::kernel_for(tau_data, cfg), cfg);
      const auto train = detail::first_stage(beta_data, detail::kernel_for(beta_data, cfg), cfg);
      std::vector<std::size_t> common;
      std::set_intersection(held.used.begin(), held.used.end(), train.used.begin(), train.used.end(),
                            std::back_inserter(common));
      if (common.empty() || train.used.empty()) {
        res.skipped_folds.push_back(k);
        continue;
      }
      const auto pb = detail::build_problem(train, cfg);
      const auto path = lasso_path(pb.lasso, grid, cfg.lasso);
      const Eigen::MatrixXd psi = [&] {
        PointList pts;
        for (auto i : common) pts.push_back(cfg.design_points[i]);
        return cfg.dictionary.design_matrix(pts);
      }();
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const Eigen::VectorXd lin = psi * path[g].beta;
        double err = 0.0;
        for (std::size_t c = 0; c < common.size(); ++c) {
          const double pred = cfg.cv.scale == CvScale::tau ? cfg.transform.inverse(lin[static_cast<Eigen::Index>(c)])
                                                           : lin[static_cast<Eigen::Index>(c)];
          const double d = held.points[common[c]].estimate->value - pred;
          err += d * d;
        }
        res.fold_error[k][g] = err;
      }
    } catch (const DegenerateInputError&) {
      res.skipped_folds.push_back(k);
      continue;
    }
  }
  if (res.skipped_folds.size() == folds) throw EstimationError("cross_validate_lambda: every fold was skipped");
  for (std::size_t k = 0; k < folds; ++k)
    for (std::size_t g = 0; g < grid.size(); ++g) res.total_error[g] += res.fold_error[k][g];
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (res.total_error[g] < res.total_error[best]) best = g;
  res.lambda_cv = grid[best];
  return res;
}

/// Two-step estimator: kernel estimates of tau at the design points, then
/// the penalized regression of Lambda(tau_hat) on psi. Design points whose
/// first stage fails are dropped and counted.
inline FitResult two_step_fit(const Sample& sample, const FitConfig& cfg) {
  detail::check_config(sample, cfg);
  FitResult r;
  r.kernel = detail::kernel_for(sample, cfg);
  r.transform = cfg.transform;
  r.dictionary = cfg.dictionary;
  r.variant = cfg.variant;
  r.include_diagonal = cfg.include_diagonal;
  r.penalty = cfg.penalty;
  r.n = sample.size();
  r.design_points = cfg.design_points;

  auto t0 = std::chrono::steady_clock::now();
  auto st = detail::first_stage(sample, r.kernel, cfg);
  r.timing.first_stage = detail::seconds_since(t0);
  r.first_stage = std::move(st.points);
  r.used_points = st.used;
  r.excluded_points = r.design_points.size() - r.used_points.size();
  r.clip_events = st.clips;
  if (r.used_points.empty())
    throw EstimationError("two_step_fit: the first stage failed at every design point");
  st.points = r.first_stage;
  const auto pb = detail::build_problem(st, cfg);
  r.penalty_weights = pb.lasso.weights;

  double lambda = cfg.lambda;
  if (cfg.lambda_cv) {
    t0 = std::chrono::steady_clock::now();
    std::vector<double> grid = cfg.cv.grid;
    if (grid.empty()) grid = default_lambda_grid(lambda_max(pb.lasso), cfg.cv.grid_size, cfg.cv.grid_ratio);
    r.cv = cross_validate_lambda(sample, cfg, grid);
    r.lambda_cv = r.cv->lambda_cv;
    lambda = cfg.lambda_multiplier * r.cv->lambda_cv;
    r.timing.cross_validation = detail::seconds_since(t0);
  }
  r.lambda_used = lambda;

  t0 = std::chrono::steady_clock::now();
  LassoProblem lp = pb.lasso;
  lp.lambda = lambda;
  r.lasso = fit(lp, cfg.lasso);
  r.beta = r.lasso.beta;
  r.timing.second_stage = detail::seconds_since(t0);
  return r;
}

/// Lambda^-1(psi(z)^T beta), clipped to [-1, 1].
inline double predict(const FitResult& fit, std::span<const double> z) {
  detail::require(z.size() == fit.dictionary.input_dim(), "predict: dimension mismatch");
  return std::clamp(fit.transform.inverse(fit.linear_predictor(z)), -1.0, 1.0);
}

/// d tau(z) / d z_coord = (d psi(z) / d z_coord)^T beta * (Lambda^-1)'(psi(z)^T beta),
/// with (Lambda^-1)'(y) = 1 / Lambda'(Lambda^-1(y)). `coord` is 0-based.
inline double marginal_effect(const FitResult& fit, std::span<const double> z, std::size_t coord) {
  const auto dpsi = fit.dictionary.evaluate_derivative(z, coord);
  const double y = fit.linear_predictor(z);
  const double tau = fit.transform.inverse(y);
  const double lim = fit.transform.family == TransformFamily::identity ? 1.0 : 1.0 - fit.transform.clamp_eps;
  if (!(std::abs(tau) < lim))
    throw EstimationError("marginal_effect: the predictor is saturated at this point");
  double slope = 0.0;
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) slope += dpsi[static_cast<std::size_t>(j)] * fit.beta[j];
  return slope / fit.transform.derivative(tau);
}

}  // namespace kreg
