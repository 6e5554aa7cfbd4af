#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kendallreg/ckt.hpp"
#include "kendallreg/dictionary.hpp"
#include "kendallreg/inference.hpp"
#include "kendallreg/parallel.hpp"
#include "kendallreg/pipeline.hpp"
#include "kendallreg/simulation.hpp"

namespace kreg {

enum class EstimatorId { kernel, two_step, oracle };

inline std::string_view to_string(EstimatorId e) {
  switch (e) {
    case EstimatorId::kernel: return "kernel";
    case EstimatorId::two_step: return "two_step";
    case EstimatorId::oracle: return "oracle";
  }
  return "kernel";
}

inline EstimatorId estimator_from_string(std::string_view s) {
  if (s == "kernel") return EstimatorId::kernel;
  if (s == "two_step" || s == "two-step") return EstimatorId::two_step;
  if (s == "oracle") return EstimatorId::oracle;
  throw ArgumentError("unknown estimator '" + std::string(s) + "'");
}

/// Grid-integrated error measures of an estimator of z -> tau(z). Integrals
/// are grid averages times the box volume (1 on [0,1]^p).
struct MetricReport {
  std::string setting;
  EstimatorId estimator = EstimatorId::kernel;
  std::size_t n = 0;
  std::size_t replications = 0;
  std::size_t grid_size = 0;
  double ibias = 0, ivar = 0, isd = 0, imse = 0;
  double cpu_seconds = 0, wall_seconds = 0;
  std::size_t failed_evaluations = 0;  // (replication, grid point) pairs without an estimate
  std::size_t uncovered_points = 0;    // grid points with no estimate in any replication
  std::size_t nonconverged = 0;
  std::string error;                   // set when the whole cell failed
};

/// values[r][g] is the estimate of replication r at grid point g (NaN if it
/// failed). IVar uses divisor R so that IMSE = IBias-squared-integrand + IVar
/// pointwise.
inline MetricReport integrate_metrics(const std::vector<std::vector<double>>& values,
                                      const std::vector<double>& truth, double volume = 1.0) {
  MetricReport m;
  m.replications = values.size();
  m.grid_size = truth.size();
  std::size_t covered = 0;
  for (std::size_t g = 0; g < truth.size(); ++g) {
    double sum = 0, sq_err = 0;
    std::size_t k = 0;
    for (const auto& row : values) {
      detail::require(row.size() == truth.size(), "integrate_metrics: ragged value table");
      if (std::isnan(row[g])) {
        ++m.failed_evaluations;
        continue;
      }
      sum += row[g];
      const double e = row[g] - truth[g];
      sq_err += e * e;
      ++k;
    }
    if (k == 0) {
      ++m.uncovered_points;
      continue;
    }
    const double mean = sum / static_cast<double>(k);
    double var = 0;
    for (const auto& row : values)
      if (!std::isnan(row[g])) var += (row[g] - mean) * (row[g] - mean);
    var /= static_cast<double>(k);
    m.ibias += mean - truth[g];
    m.ivar += var;
    m.isd += std::sqrt(var);
    m.imse += sq_err / static_cast<double>(k);
    ++covered;
  }
  if (covered > 0) {
    const double f = volume / static_cast<double>(covered);
    m.ibias *= f;
    m.ivar *= f;
    m.isd *= f;
    m.imse *= f;
  }
  return m;
}

/// Replication r of a cell uses the stream seed -> setting -> n -> r, so the
/// estimators of one cell see the same samples.
inline Rng replication_rng(std::uint64_t seed, std::string_view setting, std::size_t n, std::size_t r) {
  std::uint64_t tag = 1469598103934665603ULL;
  for (char c : setting) tag = (tag ^ static_cast<unsigned char>(c)) * 1099511628211ULL;
  return Rng(seed).derive(tag).derive(n).derive(r);
}

/// Evaluates one estimator on a grid for one sample.
inline std::vector<double> estimate_on_grid(const SettingSpec& spec, EstimatorId est, const Sample& sample,
                                            const PointList& grid, const FitConfig& cfg, bool* converged = nullptr) {
  std::vector<double> out(grid.size(), std::numeric_limits<double>::quiet_NaN());
  if (converged) *converged = true;
  switch (est) {
    case EstimatorId::oracle:
      for (std::size_t g = 0; g < grid.size(); ++g) out[g] = true_tau(spec, grid[g]);
      break;
    case EstimatorId::kernel: {
      const KernelSpec k = cfg.bandwidth ? KernelSpec(cfg.kernel, *cfg.bandwidth, sample.dim())
                                         : KernelSpec(cfg.kernel, rule_of_thumb_bandwidth(sample, cfg.bandwidth_multiplier), sample.dim());
      const auto res = ckt_batch(sample, grid, k, {cfg.variant, cfg.include_diagonal}, 1);
      for (std::size_t g = 0; g < grid.size(); ++g)
        if (res[g].ok()) out[g] = res[g].estimate->value;
      break;
    }
    case EstimatorId::two_step: {
      FitConfig c = cfg;
      c.threads = 1;
      const FitResult f = two_step_fit(sample, c);
      if (converged) *converged = f.converged();
      for (std::size_t g = 0; g < grid.size(); ++g) out[g] = predict(f, grid[g]);
      break;
    }
  }
  return out;
}

inline double cpu_seconds_now() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

inline MetricReport integrated_metrics(const SettingSpec& spec, EstimatorId est, std::size_t n, std::size_t R,
                                       const PointList& grid, const FitConfig& cfg, std::uint64_t seed,
                                       unsigned threads = 1) {
  detail::require(R >= 2, "integrated_metrics: need at least 2 replications");
  detail::require(!grid.empty(), "integrated_metrics: empty grid");
  const double cpu0 = cpu_seconds_now();
  const auto wall0 = std::chrono::steady_clock::now();
  std::vector<std::vector<double>> values(R);
  std::vector<char> conv(R, 1);
  parallel_for(R, threads, [&](std::size_t r) {
    const Sample s = sample_setting(spec, n, replication_rng(seed, spec.name, n, r));
    bool ok = true;
    try {
      values[r] = estimate_on_grid(spec, est, s, grid, cfg, &ok);
    } catch (const Error&) {
      values[r].assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
    }
    conv[r] = ok ? 1 : 0;
  });
  std::vector<double> truth(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) truth[g] = true_tau(spec, grid[g]);
  MetricReport m = integrate_metrics(values, truth);
  m.setting = spec.name;
  m.estimator = est;
  m.n = n;
  for (char c : conv) m.nonconverged += c ? 0 : 1;
  m.cpu_seconds = cpu_seconds_now() - cpu0;
  m.wall_seconds = detail::seconds_since(wall0);
  return m;
}

/// One row per (setting, n, estimator), in that nesting order. A failing
/// cell is reported with its error message instead of aborting the table.
inline std::vector<MetricReport> comparison_table(const std::vector<SettingSpec>& settings,
                                                  const std::vector<EstimatorId>& estimators,
                                                  const std::vector<std::size_t>& n_values, std::size_t R,
                                                  const PointList& grid, const FitConfig& cfg, std::uint64_t seed,
                                                  unsigned threads = 1) {
  std::vector<MetricReport> rows;
  for (const auto& s : settings)
    for (auto n : n_values)
      for (auto e : estimators) {
        try {
          rows.push_back(integrated_metrics(s, e, n, R, grid, cfg, seed, threads));
        } catch (const Error& ex) {
          MetricReport m;
          m.setting = s.name;
          m.estimator = e;
          m.n = n;
          m.replications = R;
          m.error = ex.what();
          rows.push_back(m);
        }
      }
  return rows;
}

struct PowerRow {
  std::string setting;
  std::size_t n = 0;
  std::size_t replications = 0;
  std::size_t rejections = 0;
  std::size_t failures = 0;   // replications where the fit or the test failed
  double level = 0.05;
  double rejection_percent = 0;
  double mean_p_value = 0;
};

/// Fraction (in percent) of replications with Wald p-value < level. Failed
/// replications are excluded from the denominator and counted.
inline std::vector<PowerRow> test_power_table(const std::vector<SettingSpec>& settings, std::size_t n, std::size_t R,
                                              double level, const FitConfig& cfg, const WaldOptions& wopt,
                                              std::uint64_t seed, unsigned threads = 1) {
  detail::require(level >= 0 && level <= 1, "test_power_table: level must lie in [0, 1]");
  detail::require(R >= 1, "test_power_table: need at least one replication");
  std::vector<PowerRow> rows;
  for (const auto& spec : settings) {
    std::vector<double> pv(R, std::numeric_limits<double>::quiet_NaN());
    parallel_for(R, threads, [&](std::size_t r) {
      const Sample s = sample_setting(spec, n, replication_rng(seed, spec.name, n, r));
      try {
        FitConfig c = cfg;
        c.threads = 1;
        const FitResult f = two_step_fit(s, c);
        WaldOptions w = wopt;
        w.seed = replication_rng(seed, spec.name, n, r).derive(0x5741).key();
        pv[r] = wald_test(s, f, w).p_value;
      } catch (const Error&) {
      }
    });
    PowerRow row;
    row.setting = spec.name;
    row.n = n;
    row.replications = R;
    row.level = level;
    std::size_t ok = 0;
    for (double p : pv) {
      if (std::isnan(p)) {
        ++row.failures;
        continue;
      }
      ++ok;
      row.mean_p_value += p;
      if (p < level || level >= 1.0) ++row.rejections;
    }
    if (ok) {
      row.rejection_percent = 100.0 * static_cast<double>(row.rejections) / static_cast<double>(ok);
      row.mean_p_value /= static_cast<double>(ok);
    }
    rows.push_back(row);
  }
  return rows;
}

/// Per-coefficient summary over replications: mean, bias, standard
/// deviation (divisor R) and frequency of being nonzero.
struct CoefficientStudy {
  std::vector<std::string> names;
  std::vector<double> truth, mean, bias, sd, prob_nonzero;
  std::size_t replications = 0;
  std::size_t failures = 0;
  std::vector<Eigen::VectorXd> betas;
};

inline CoefficientStudy coefficient_study(const SettingSpec& spec, std::size_t n, std::size_t R, const FitConfig& cfg,
                                          const std::vector<double>& truth, std::uint64_t seed,
                                          unsigned threads = 1) {
  const std::size_t p = cfg.dictionary.size();
  detail::require(truth.size() == p, "coefficient_study: truth length != dictionary size");
  std::vector<std::optional<Eigen::VectorXd>> fits(R);
  parallel_for(R, threads, [&](std::size_t r) {
    const Sample s = sample_setting(spec, n, replication_rng(seed, spec.name, n, r));
    try {
      FitConfig c = cfg;
      c.threads = 1;
      fits[r] = two_step_fit(s, c).beta;
    } catch (const Error&) {
    }
  });
  CoefficientStudy st;
  st.names = cfg.dictionary.names();
  st.truth = truth;
  st.mean.assign(p, 0);
  st.bias.assign(p, 0);
  st.sd.assign(p, 0);
  st.prob_nonzero.assign(p, 0);
  for (auto& f : fits) {
    if (f) st.betas.push_back(*f);
    else ++st.failures;
  }
  st.replications = st.betas.size();
  if (st.betas.empty()) return st;
  const double k = static_cast<double>(st.betas.size());
  for (std::size_t j = 0; j < p; ++j) {
    double sum = 0, nz = 0;
    for (const auto& b : st.betas) {
      sum += b[static_cast<Eigen::Index>(j)];
      nz += b[static_cast<Eigen::Index>(j)] != 0.0 ? 1 : 0;
    }
    st.mean[j] = sum / k;
    double var = 0;
    for (const auto& b : st.betas) var += std::pow(b[static_cast<Eigen::Index>(j)] - st.mean[j], 2);
    st.sd[j] = std::sqrt(var / k);
    st.bias[j] = st.mean[j] - truth[j];
    st.prob_nonzero[j] = nz / k;
  }
  return st;
}

/// Bench defaults for univariate settings: Epanechnikov kernel with
/// h = 0.25 sd(Z) n^(-1/5), identity link, g2 with the diagonal, the 1D
/// family on 100 design points in [0.01, 0.99], lambda = 2 lambda_cv, and
/// standardized penalty weights with a free intercept.
inline FitConfig bench_config_1d() {
  FitConfig c;
  c.kernel = KernelFamily::epanechnikov;
  c.bandwidth_multiplier = 0.25;
  c.transform = TransformSpec{TransformFamily::identity};
  c.dictionary = dict::family_1d();
  c.design_points = equispaced_grid(0.01, 0.99, 100, 1);
  c.lambda_cv = true;
  c.lambda_multiplier = 2.0;
  c.variant = Concordance::g2;
  c.include_diagonal = true;
  c.penalty = PenaltyScaling::column_sd;
  return c;
}

/// Bivariate defaults: family `id` of the 2D dictionaries on a 10x10 grid in
/// [0.1, 0.9]^2, otherwise as bench_config_1d.
inline FitConfig bench_config_2d(int family_id = 5) {
  FitConfig c = bench_config_1d();
  c.dictionary = dict::family_2d(family_id);
  c.design_points = equispaced_grid(0.1, 0.9, 10, 2);
  return c;
}

/// Evaluation grid of the benchmark: 201 points on [0,1] or 41x41 on [0,1]^2.
inline PointList bench_grid(std::size_t dim, std::optional<std::size_t> per_axis = std::nullopt) {
  return equispaced_grid(0.0, 1.0, per_axis.value_or(dim == 1 ? 201 : 41), dim);
}

}  // namespace kreg
