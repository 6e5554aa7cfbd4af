#pragma once

#include <cmath>
#include <vector>

#include "kendallreg/kendallreg.hpp"
#include "oracles.hpp"

namespace support {

/// Random observations; with `ties` the x values are rounded to a coarse
/// lattice so that g sees equal coordinates.
inline std::vector<oracle::Obs> random_obs(kreg::Rng& rng, std::size_t n, std::size_t dim, bool ties = false) {
  std::vector<oracle::Obs> d(n);
  for (auto& o : d) {
    o.x1 = rng.normal();
    o.x2 = 0.5 * o.x1 + rng.normal();
    if (ties) {
      o.x1 = std::round(o.x1 * 2.0) / 2.0;
      o.x2 = std::round(o.x2 * 2.0) / 2.0;
    }
    o.z.resize(dim);
    for (double& v : o.z) v = rng.uniform();
  }
  return d;
}

inline kreg::Sample to_sample(const std::vector<oracle::Obs>& d) {
  std::vector<double> a, b, z;
  for (const auto& o : d) {
    a.push_back(o.x1);
    b.push_back(o.x2);
    z.insert(z.end(), o.z.begin(), o.z.end());
  }
  return kreg::Sample(a, b, z, d.front().z.size());
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace support
