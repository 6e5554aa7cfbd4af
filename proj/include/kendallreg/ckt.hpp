#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kendallreg/dictionary.hpp"
#include "kendallreg/error.hpp"
#include "kendallreg/kernel.hpp"
#include "kendallreg/parallel.hpp"
#include "kendallreg/rng.hpp"

namespace kreg {

/// Pair kernels g* with E[g*(X_i, X_j) | Z_i = Z_j = z] = tau(z).
enum class Concordance { g1, g2, g3 };

inline std::string_view to_string(Concordance g) {
  switch (g) {
    case Concordance::g1: return "g1";
    case Concordance::g2: return "g2";
    case Concordance::g3: return "g3";
  }
  return "g2";
}

inline Concordance concordance_from_string(std::string_view s) {
  if (s == "g1") return Concordance::g1;
  if (s == "g2") return Concordance::g2;
  if (s == "g3") return Concordance::g3;
  throw ArgumentError("unknown concordance variant '" + std::string(s) + "'");
}

/// c_1 = c_3 = 4, c_2 = 2.
inline double concordance_constant(Concordance g) noexcept { return g == Concordance::g2 ? 2.0 : 4.0; }

struct Pair {
  double x1;
  double x2;
};

inline double concordance_unchecked(Concordance g, Pair a, Pair b) noexcept {
  switch (g) {
    case Concordance::g1: return (a.x1 < b.x1 && a.x2 < b.x2) ? 3.0 : -1.0;
    case Concordance::g2: {
      const int s1 = (a.x1 > b.x1) - (a.x1 < b.x1);
      const int s2 = (a.x2 > b.x2) - (a.x2 < b.x2);
      return static_cast<double>(s1 * s2);
    }
    case Concordance::g3: return (a.x1 < b.x1 && a.x2 > b.x2) ? -3.0 : 1.0;
  }
  return 0.0;
}

inline double concordance(Concordance g, Pair a, Pair b) {
  if (std::isnan(a.x1) || std::isnan(a.x2) || std::isnan(b.x1) || std::isnan(b.x2))
    throw ArgumentError("concordance: NaN coordinate");
  return concordance_unchecked(g, a, b);
}

/// (g(a, b) + g(b, a)) / 2.
inline double symmetrized(Concordance g, Pair a, Pair b) noexcept {
  return 0.5 * (concordance_unchecked(g, a, b) + concordance_unchecked(g, b, a));
}

struct CktEstimate {
  Point z;
  double value = 0;           // clipped to [-1, 1]
  double raw = 0;             // before clipping
  bool clipped = false;
  std::size_t effective_mass = 0;  // #{i : w_i > 0}
  double density = 0;              // f_hat_Z(z)
};

struct CktOptions {
  Concordance variant = Concordance::g2;
  bool include_diagonal = true;
};

namespace detail {

/// Observations with positive weight at z, with their normalized weights.
struct Neighborhood {
  std::vector<std::size_t> index;
  std::vector<double> weight;
  double density = 0;
};

inline Neighborhood neighborhood(const Sample& s, std::span<const double> z, const KernelSpec& k) {
  check_query(s, z, k);
  Neighborhood nb;
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = k.scaled(s.z(i), z);
    total += v;
    if (v > 0) {
      nb.index.push_back(i);
      nb.weight.push_back(v);
    }
  }
  if (!(total > 0)) throw EmptyNeighborhoodError(Point(z.begin(), z.end()));
  for (double& w : nb.weight) w /= total;
  nb.density = s.empty() ? 0.0 : total / static_cast<double>(s.size());
  return nb;
}

}  // namespace detail

/// tau_hat(z) = sum_i sum_j w_i(z) w_j(z) g*(X_i, X_j), i outer and j inner.
/// With include_diagonal = false the i = j terms are dropped and the sum is
/// renormalized by 1 - sum_i w_i^2. The reported value is clipped to [-1, 1].
inline CktEstimate ckt_at(const Sample& sample, std::span<const double> z, const KernelSpec& kernel,
                          const CktOptions& opt = {}) {
  if (sample.size() < 2)
    throw DegenerateInputError("ckt_at: need n >= 2, got " + std::to_string(sample.size()));
  const auto nb = detail::neighborhood(sample, z, kernel);
  const std::size_t m = nb.index.size();
  double sum = 0.0;
  double diag_mass = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    const Pair pa{sample.x1(nb.index[a]), sample.x2(nb.index[a])};
    const double wa = nb.weight[a];
    diag_mass += wa * wa;
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a && !opt.include_diagonal) continue;
      const Pair pb{sample.x1(nb.index[b]), sample.x2(nb.index[b])};
      sum += wa * nb.weight[b] * concordance_unchecked(opt.variant, pa, pb);
    }
  }
  if (!opt.include_diagonal) {
    const double off = 1.0 - diag_mass;
    if (!(off > 1e-14))
      throw DegenerateInputError("ckt_at: a single observation carries all kernel mass");
    sum /= off;
  }
  CktEstimate est;
  est.z.assign(z.begin(), z.end());
  est.raw = sum;
  est.value = std::clamp(sum, -1.0, 1.0);
  est.clipped = est.value != sum;
  est.effective_mass = m;
  est.density = nb.density;
  return est;
}

/// Outcome of one point in a batch: either an estimate or the failure reason.
struct CktPointResult {
  std::optional<CktEstimate> estimate;
  std::string error;
  bool ok() const noexcept { return estimate.has_value(); }
};

/// ckt_at over a list of points; failures are recorded per point rather than
/// aborting the batch. Output order matches input order.
inline std::vector<CktPointResult> ckt_batch(const Sample& sample, const PointList& points,
                                             const KernelSpec& kernel, const CktOptions& opt = {},
                                             unsigned threads = 1) {
  std::vector<CktPointResult> out(points.size());
  parallel_for(points.size(), threads, [&](std::size_t i) {
    try {
      out[i].estimate = ckt_at(sample, points[i], kernel, opt);
    } catch (const EmptyNeighborhoodError& e) {
      out[i].error = e.what();
    } catch (const DegenerateInputError& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

struct GnOptions {
  Concordance variant = Concordance::g2;
  /// Above this many ordered triples (counted over positive-weight
  /// observations) the exact value is computed by the O(m^2) reduction
  /// unless `max_triples` asks for subsampling.
  std::uint64_t exact_triple_budget = 30ULL * 30ULL * 30ULL;
  /// When set and m(m-1)(m-2) exceeds it, draw this many triples instead.
  std::optional<std::uint64_t> max_triples;
  std::uint64_t seed = 0;
};

namespace detail {

inline double gn_triple_loop(const Sample& s, const Neighborhood& nb, Concordance g) {
  const std::size_t m = nb.index.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Pair pi{s.x1(nb.index[i]), s.x2(nb.index[i])};
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const Pair pj{s.x1(nb.index[j]), s.x2(nb.index[j])};
      for (std::size_t k = 0; k < m; ++k) {
        if (k == i || k == j) continue;
        const Pair pk{s.x1(nb.index[k]), s.x2(nb.index[k])};
        total += nb.weight[i] * nb.weight[j] * nb.weight[k] * symmetrized(g, pi, pk) *
                 symmetrized(g, pj, pk);
      }
    }
  }
  return total;
}

// sum_{i != j, both != k} a_i a_j = (sum a)^2 - sum a^2 with a_i = w_i g~(X_i, X_k).
inline double gn_reduced(const Sample& s, const Neighborhood& nb, Concordance g) {
  const std::size_t m = nb.index.size();
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const Pair pk{s.x1(nb.index[k]), s.x2(nb.index[k])};
    double lin = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == k) continue;
      const double a = nb.weight[i] * symmetrized(g, {s.x1(nb.index[i]), s.x2(nb.index[i])}, pk);
      lin += a;
      sq += a * a;
    }
    total += nb.weight[k] * (lin * lin - sq);
  }
  return total;
}

inline double gn_subsample(const Sample& s, const Neighborhood& nb, Concordance g,
                           std::uint64_t draws, std::uint64_t seed) {
  const std::uint64_t m = nb.index.size();
  Rng rng(seed);
  double acc = 0.0;
  for (std::uint64_t t = 0; t < draws; ++t) {
    const std::uint64_t i = rng.below(m);
    std::uint64_t j = rng.below(m - 1);
    if (j >= i) ++j;
    std::uint64_t k = rng.below(m - 2);
    const std::uint64_t lo = std::min(i, j), hi = std::max(i, j);
    if (k >= lo) ++k;
    if (k >= hi) ++k;
    const Pair pi{s.x1(nb.index[i]), s.x2(nb.index[i])};
    const Pair pj{s.x1(nb.index[j]), s.x2(nb.index[j])};
    const Pair pk{s.x1(nb.index[k]), s.x2(nb.index[k])};
    acc += nb.weight[i] * nb.weight[j] * nb.weight[k] * symmetrized(g, pi, pk) * symmetrized(g, pj, pk);
  }
  const double count = static_cast<double>(m) * static_cast<double>(m - 1) * static_cast<double>(m - 2);
  return count * acc / static_cast<double>(draws);
}

}  // namespace detail

/// G_n(z) = sum over pairwise distinct (i, j, k) of
/// w_i w_j w_k g~(X_i, X_k) g~(X_j, X_k).
inline double gn_moment(const Sample& sample, std::span<const double> z, const KernelSpec& kernel,
                        const GnOptions& opt = {}) {
  if (sample.size() < 3)
    throw DegenerateInputError("gn_moment: need n >= 3, got " + std::to_string(sample.size()));
  const auto nb = detail::neighborhood(sample, z, kernel);
  const auto m = static_cast<std::uint64_t>(nb.index.size());
  if (m < 3) return 0.0;
  const std::uint64_t triples = m * (m - 1) * (m - 2);
  if (opt.max_triples && triples > *opt.max_triples)
    return detail::gn_subsample(sample, nb, opt.variant, *opt.max_triples, opt.seed);
  if (triples <= opt.exact_triple_budget) return detail::gn_triple_loop(sample, nb, opt.variant);
  return detail::gn_reduced(sample, nb, opt.variant);
}

}  // namespace kreg
