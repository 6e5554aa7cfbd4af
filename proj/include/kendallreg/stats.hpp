#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "kendallreg/error.hpp"

namespace kreg {

/// Kendall's tau-a, (#concordant - #discordant) / C(n,2), in O(n log n) by
/// counting inversions. Pairs tied in either coordinate count as 0.
inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  detail::require(x.size() == y.size(), "kendall_tau: length mismatch");
  const std::size_t n = x.size();
  detail::require(n >= 2, "kendall_tau: need at least 2 observations");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];

  std::int64_t tied_x = 0, tied_xy = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && x[idx[j]] == x[idx[i]]) ++j;
    const auto run = static_cast<std::int64_t>(j - i);
    tied_x += run * (run - 1) / 2;
    for (std::size_t a = i; a < j;) {
      std::size_t b = a;
      while (b < j && ys[b] == ys[a]) ++b;
      const auto r2 = static_cast<std::int64_t>(b - a);
      tied_xy += r2 * (r2 - 1) / 2;
      a = b;
    }
    i = j;
  }

  // Bottom-up merge sort on ys counting strict inversions.
  std::int64_t swaps = 0;
  std::vector<double> buf(n);
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t a = lo, b = mid, k = lo;
      while (a < mid && b < hi) {
        if (ys[b] < ys[a]) {
          swaps += static_cast<std::int64_t>(mid - a);
          buf[k++] = ys[b++];
        } else {
          buf[k++] = ys[a++];
        }
      }
      while (a < mid) buf[k++] = ys[a++];
      while (b < hi) buf[k++] = ys[b++];
    }
    std::swap(ys, buf);
  }

  std::int64_t tied_y = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && ys[j] == ys[i]) ++j;
    const auto run = static_cast<std::int64_t>(j - i);
    tied_y += run * (run - 1) / 2;
    i = j;
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t diff = n0 - tied_x - tied_y + tied_xy - 2 * swaps;
  return static_cast<double>(diff) / static_cast<double>(n0);
}

/// Kolmogorov-Smirnov distance between the empirical cdf of `u` and U(0,1).
inline double ks_distance_uniform(std::vector<double> u) {
  detail::require(!u.empty(), "ks_distance_uniform: empty input");
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double v = std::clamp(u[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - v, v - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace kreg
