#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kendallreg/error.hpp"

namespace kreg {

/// n observations of (X1, X2, Z) with Z in R^p, stored column-wise for X and
/// row-major for Z. Immutable once built.
class Sample {
 public:
  Sample() = default;

  Sample(std::vector<double> x1, std::vector<double> x2, std::vector<double> z_row_major,
         std::size_t dim)
      : x1_(std::move(x1)), x2_(std::move(x2)), z_(std::move(z_row_major)), dim_(dim) {
    detail::require(dim_ >= 1, "Sample: covariate dimension must be >= 1");
    detail::require(x1_.size() == x2_.size(), "Sample: x1 and x2 lengths differ");
    detail::require(z_.size() == x1_.size() * dim_,
                    "Sample: z has " + std::to_string(z_.size()) + " entries, expected " +
                        std::to_string(x1_.size() * dim_));
    for (std::size_t i = 0; i < x1_.size(); ++i)
      detail::require(!std::isnan(x1_[i]) && !std::isnan(x2_[i]), "Sample: NaN in x1/x2 at row " + std::to_string(i));
    for (double v : z_) detail::require(std::isfinite(v), "Sample: non-finite covariate value");
  }

  /// Convenience for p = 1.
  static Sample univariate(std::vector<double> x1, std::vector<double> x2, std::vector<double> z) {
    return Sample(std::move(x1), std::move(x2), std::move(z), 1);
  }

  std::size_t size() const noexcept { return x1_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return x1_.empty(); }

  double x1(std::size_t i) const { return x1_[i]; }
  double x2(std::size_t i) const { return x2_[i]; }
  std::span<const double> z(std::size_t i) const { return {z_.data() + i * dim_, dim_}; }

  const std::vector<double>& x1s() const noexcept { return x1_; }
  const std::vector<double>& x2s() const noexcept { return x2_; }
  const std::vector<double>& zs() const noexcept { return z_; }

  std::vector<double> z_column(std::size_t k) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = z_[i * dim_ + k];
    return out;
  }

  /// Rows picked by index, in the given order (duplicates allowed).
  Sample subset(std::span<const std::size_t> rows) const {
    std::vector<double> a, b, c;
    a.reserve(rows.size());
    b.reserve(rows.size());
    c.reserve(rows.size() * dim_);
    for (auto r : rows) {
      a.push_back(x1_.at(r));
      b.push_back(x2_[r]);
      for (std::size_t k = 0; k < dim_; ++k) c.push_back(z_[r * dim_ + k]);
    }
    return Sample(std::move(a), std::move(b), std::move(c), dim_);
  }

 private:
  std::vector<double> x1_, x2_, z_;
  std::size_t dim_ = 1;
};

enum class KernelFamily { gaussian, epanechnikov };

inline std::string_view to_string(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "epanechnikov";
}

inline KernelFamily kernel_family_from_string(std::string_view s) {
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "epanechnikov") return KernelFamily::epanechnikov;
  throw ArgumentError("unknown kernel family '" + std::string(s) + "'");
}

/// Product kernel K(u) = prod_k K1(u_k) with bandwidth h on R^p.
class KernelSpec {
 public:
  KernelSpec(KernelFamily family, double bandwidth, std::size_t dim = 1)
      : family_(family), h_(bandwidth), dim_(dim) {
    detail::require(std::isfinite(h_) && h_ > 0, "KernelSpec: bandwidth must be > 0");
    detail::require(dim_ >= 1, "KernelSpec: dimension must be >= 1");
  }

  KernelFamily family() const noexcept { return family_; }
  double bandwidth() const noexcept { return h_; }
  std::size_t dim() const noexcept { return dim_; }

  /// Univariate factor K1.
  double univariate(double u) const noexcept {
    if (family_ == KernelFamily::gaussian) {
      return std::exp(-0.5 * u * u) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
    }
    const double a = std::abs(u);
    return a <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  }

  /// Half-width of the support of K1 (infinite for the Gaussian).
  double support_radius() const noexcept {
    return family_ == KernelFamily::gaussian ? INFINITY : 1.0;
  }

  /// int K1^2 raised to the power p.
  double int_k2() const noexcept {
    const double one = family_ == KernelFamily::gaussian ? 0.5 * std::numbers::inv_sqrtpi : 0.6;
    return std::pow(one, static_cast<double>(dim_));
  }

  /// C_K = sup K = K1(0)^p.
  double sup() const noexcept { return std::pow(univariate(0.0), static_cast<double>(dim_)); }

  /// Unscaled K(u).
  double value(std::span<const double> u) const {
    if (u.size() != dim_) {
      throw ArgumentError("kernel_value: expected dimension " + std::to_string(dim_) + ", got " +
                          std::to_string(u.size()));
    }
    double k = 1.0;
    for (double v : u) {
      k *= univariate(v);
      if (k == 0.0) break;
    }
    return k;
  }

  /// K_h(Z_i - z) = K((Z_i - z)/h) / h^p, evaluated without temporaries.
  double scaled(std::span<const double> zi, std::span<const double> z) const noexcept {
    double k = 1.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      k *= univariate((zi[d] - z[d]) / h_) / h_;
      if (k == 0.0) break;
    }
    return k;
  }

 private:
  KernelFamily family_;
  double h_;
  std::size_t dim_;
};

inline double kernel_value(const KernelSpec& spec, std::span<const double> u) {
  return spec.value(u);
}

namespace detail {

inline void check_query(const Sample& s, std::span<const double> z, const KernelSpec& k) {
  if (z.size() != k.dim() || s.dim() != k.dim()) {
    throw ArgumentError("dimension mismatch: sample p=" + std::to_string(s.dim()) +
                        ", kernel p=" + std::to_string(k.dim()) +
                        ", query p=" + std::to_string(z.size()));
  }
}

inline double sample_sd(const std::vector<double>& v) {
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

}  // namespace detail

/// multiplier * sd(Z) * n^(-1/5) for p = 1. For p > 1 the geometric mean of
/// the per-coordinate standard deviations and the rate n^(-1/(4+p)) are used.
inline double rule_of_thumb_bandwidth(const Sample& sample, double multiplier) {
  detail::require(std::isfinite(multiplier) && multiplier > 0,
                  "rule_of_thumb_bandwidth: multiplier must be > 0");
  if (sample.size() < 2) {
    throw DegenerateInputError("rule_of_thumb_bandwidth: need n >= 2, got " +
                               std::to_string(sample.size()));
  }
  const std::size_t p = sample.dim();
  double log_scale = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    const double sd = detail::sample_sd(sample.z_column(k));
    if (!(sd > 0)) {
      throw DegenerateInputError("rule_of_thumb_bandwidth: covariate z" + std::to_string(k + 1) +
                                 " has zero variance");
    }
    log_scale += std::log(sd);
  }
  const double pd = static_cast<double>(p);
  return multiplier * std::exp(log_scale / pd) *
         std::pow(static_cast<double>(sample.size()), -1.0 / (4.0 + pd));
}

/// f_hat(z) = (1/n) sum_i K_h(Z_i - z).
inline double density_estimate(const Sample& sample, std::span<const double> z,
                               const KernelSpec& spec) {
  detail::check_query(sample, z, spec);
  if (sample.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) s += spec.scaled(sample.z(i), z);
  return s / static_cast<double>(sample.size());
}

/// Nadaraya-Watson weights w_i(z) = K_h(Z_i - z) / sum_j K_h(Z_j - z).
inline std::vector<double> nw_weights(const Sample& sample, std::span<const double> z,
                                      const KernelSpec& spec) {
  detail::check_query(sample, z, spec);
  std::vector<double> w(sample.size());
  double total = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    w[i] = spec.scaled(sample.z(i), z);
    total += w[i];
  }
  if (!(total > 0)) throw EmptyNeighborhoodError(std::vector<double>(z.begin(), z.end()));
  for (double& wi : w) wi /= total;
  return w;
}

}  // namespace kreg
