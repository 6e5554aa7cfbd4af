#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace kreg;

namespace {

Sample standardized_sample(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> z(n), x(n);
  for (auto& v : z) v = rng.normal();
  double mean = 0;
  for (double v : z) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0;
  for (double v : z) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  for (auto& v : z) v = (v - mean) / sd;
  for (auto& v : x) v = rng.normal();
  return Sample::univariate(x, x, z);
}

}  // namespace

TEST(Kernel, ValuesAtKnownPoints) {
  const KernelSpec g(KernelFamily::gaussian, 1.0), e(KernelFamily::epanechnikov, 1.0);
  const std::vector<double> zero{0.0}, far{1.5};
  EXPECT_NEAR(kernel_value(g, zero), 0.3989422804014327, 1e-15);
  EXPECT_DOUBLE_EQ(kernel_value(e, zero), 0.75);
  EXPECT_EQ(kernel_value(e, far), 0.0);
  const std::vector<double> bad{0.0, 0.0};
  EXPECT_THROW(kernel_value(e, bad), ArgumentError);
}

TEST(Kernel, SymmetricAndIntegratesToOne) {
  for (auto fam : {KernelFamily::gaussian, KernelFamily::epanechnikov}) {
    const KernelSpec k(fam, 1.0);
    double mass = 0, sq = 0;
    const double du = 1e-4;
    for (double u = -12.0 + du / 2; u < 12.0; u += du) {
      const double v = k.univariate(u);
      mass += v * du;
      sq += v * v * du;
      EXPECT_EQ(k.univariate(u), k.univariate(-u));
    }
    EXPECT_NEAR(mass, 1.0, 1e-6);
    EXPECT_NEAR(sq, k.int_k2(), 1e-6);
  }
  EXPECT_NEAR(KernelSpec(KernelFamily::gaussian, 1.0).int_k2(), 0.28209479177387814, 1e-15);
  EXPECT_DOUBLE_EQ(KernelSpec(KernelFamily::epanechnikov, 1.0).int_k2(), 0.6);
  EXPECT_NEAR(KernelSpec(KernelFamily::epanechnikov, 1.0, 2).int_k2(), 0.36, 1e-15);
}

TEST(Kernel, RejectsBadSpecs) {
  EXPECT_THROW(KernelSpec(KernelFamily::gaussian, 0.0), ArgumentError);
  EXPECT_THROW(KernelSpec(KernelFamily::gaussian, -1.0), ArgumentError);
  EXPECT_THROW(KernelSpec(KernelFamily::gaussian, 1.0, 0), ArgumentError);
}

TEST(Bandwidth, RuleOfThumbArithmetic) {
  const Sample s = standardized_sample(3000, 3);
  EXPECT_NEAR(rule_of_thumb_bandwidth(s, 1.0), 0.2016395637, 1e-9);
  EXPECT_NEAR(rule_of_thumb_bandwidth(s, 0.25), 0.0504098909, 1e-9);
}

TEST(Bandwidth, DegenerateInputs) {
  const Sample one = Sample::univariate({0.0}, {0.0}, {2.0});
  EXPECT_THROW(rule_of_thumb_bandwidth(one, 1.0), DegenerateInputError);
  const Sample flat = Sample::univariate({0.0, 1.0, 2.0}, {0.0, 1.0, 2.0}, {0.3, 0.3, 0.3});
  EXPECT_THROW(rule_of_thumb_bandwidth(flat, 1.0), DegenerateInputError);
}

TEST(Bandwidth, BivariateRuleUsesGeometricMeanAndRate) {
  Rng rng(5);
  std::vector<double> x(500), z(1000);
  for (auto& v : x) v = rng.normal();
  for (std::size_t i = 0; i < 500; ++i) {
    z[2 * i] = rng.uniform();
    z[2 * i + 1] = 3.0 * rng.uniform();
  }
  const Sample s(x, x, z, 2);
  const double s1 = detail::sample_sd(s.z_column(0)), s2 = detail::sample_sd(s.z_column(1));
  EXPECT_NEAR(rule_of_thumb_bandwidth(s, 0.5), 0.5 * std::sqrt(s1 * s2) * std::pow(500.0, -1.0 / 6.0), 1e-14);
}

TEST(Density, ExamplesAndNaiveLoop) {
  const Sample single = Sample::univariate({0.0}, {0.0}, {0.3});
  const std::vector<double> q{0.3};
  EXPECT_NEAR(density_estimate(single, q, KernelSpec(KernelFamily::gaussian, 0.5)), 0.7978845608028654, 1e-15);

  const Sample three = Sample::univariate({0, 1, 2}, {0, 1, 2}, {0.0, 0.5, 1.0});
  const std::vector<double> mid{0.5};
  EXPECT_NEAR(density_estimate(three, mid, KernelSpec(KernelFamily::epanechnikov, 0.4)), 0.625, 1e-15);

  const Sample same = Sample::univariate({0, 1, 2, 3}, {0, 1, 2, 3}, {0.2, 0.2, 0.2, 0.2});
  const std::vector<double> at{0.2};
  EXPECT_NEAR(density_estimate(same, at, KernelSpec(KernelFamily::epanechnikov, 0.1)), 7.5, 1e-12);

  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const bool gauss = rep % 2 == 0;
    const std::size_t dim = rep % 4 < 2 ? 1 : 2;
    const auto d = support::random_obs(rng, 50, dim);
    const Sample s = support::to_sample(d);
    std::vector<double> z(dim);
    for (auto& v : z) v = rng.uniform();
    const double h = 0.2 + 0.3 * rng.uniform();
    double naive = 0;
    for (const auto& o : d) {
      double k = 1;
      for (std::size_t c = 0; c < dim; ++c) k *= oracle::k1(gauss, (o.z[c] - z[c]) / h) / h;
      naive += k;
    }
    naive /= 50.0;
    EXPECT_NEAR(density_estimate(s, z, KernelSpec(gauss ? KernelFamily::gaussian : KernelFamily::epanechnikov, h, dim)),
                naive, 1e-12);
  }
}

TEST(NwWeights, NormalizedAndBounded) {
  Rng rng(23);
  for (int rep = 0; rep < 50; ++rep) {
    const auto d = support::random_obs(rng, 40, 1);
    const Sample s = support::to_sample(d);
    const std::vector<double> z{rng.uniform()};
    const auto w = nw_weights(s, z, KernelSpec(rep % 2 ? KernelFamily::gaussian : KernelFamily::epanechnikov, 0.3));
    double sum = 0;
    for (double v : w) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  const Sample same = Sample::univariate({0, 1, 2, 3}, {0, 1, 2, 3}, {0.2, 0.2, 0.2, 0.2});
  const std::vector<double> at{0.25};
  for (double v : nw_weights(same, at, KernelSpec(KernelFamily::epanechnikov, 0.1))) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(NwWeights, EmptyNeighborhoodCarriesPoint) {
  const Sample s = Sample::univariate({0, 1}, {0, 1}, {0.0, 0.1});
  const std::vector<double> z{0.5};
  try {
    nw_weights(s, z, KernelSpec(KernelFamily::epanechnikov, 0.1));
    FAIL() << "expected an empty-neighborhood error";
  } catch (const EmptyNeighborhoodError& e) {
    EXPECT_EQ(e.point(), z);
  }
}

TEST(Sample, RejectsMalformedInput) {
  EXPECT_THROW(Sample::univariate({0, 1}, {0}, {0, 1}), ArgumentError);
  EXPECT_THROW(Sample({0, 1}, {0, 1}, {0, 1, 2}, 2), ArgumentError);
  EXPECT_THROW(Sample::univariate({0, NAN}, {0, 1}, {0, 1}), ArgumentError);
  EXPECT_THROW(Sample::univariate({0, 1}, {0, 1}, {0, INFINITY}), ArgumentError);
}

TEST(Transform, Examples) {
  const TransformSpec id{TransformFamily::identity}, fi{TransformFamily::fisher};
  EXPECT_EQ(fi.apply(0.0), 0.0);
  EXPECT_NEAR(fi.apply(0.5), 1.0986122887, 1e-10);
  EXPECT_EQ(id.apply(0.37), 0.37);
  EXPECT_EQ(fi.inverse(0.0), 0.0);
  EXPECT_EQ(id.inverse(1.7), 1.0);
  EXPECT_EQ(id.inverse(-1.7), -1.0);
  EXPECT_NEAR(fi.inverse(std::log(3.0)), 0.5, 1e-15);
  EXPECT_EQ(fi.derivative(0.0), 2.0);
  EXPECT_EQ(id.derivative(0.8), 1.0);
  EXPECT_NEAR(fi.derivative(0.5), 8.0 / 3.0, 1e-15);
  EXPECT_THROW(fi.apply(NAN), ArgumentError);
}

TEST(Transform, RoundtripDerivativeAndMonotonicity) {
  for (auto fam : {TransformFamily::identity, TransformFamily::fisher, TransformFamily::loglog}) {
    const TransformSpec t{fam};
    double prev = -INFINITY;
    for (int k = -999; k <= 999; ++k) {
      const double tau = k / 1000.0;
      EXPECT_NEAR(t.inverse(t.apply(tau)), tau, 1e-10) << to_string(fam) << " tau=" << tau;
      const double step = 1e-6;
      const double fd = (t.apply(tau + step) - t.apply(tau - step)) / (2 * step);
      EXPECT_NEAR(fd, t.derivative(tau), 1e-4 * t.derivative(tau)) << to_string(fam) << " tau=" << tau;
      const double y = t.apply(tau);
      EXPECT_GT(y, prev);
      prev = y;
      const double inv = t.inverse(100.0 * (tau));
      EXPECT_GE(inv, -1.0);
      EXPECT_LE(inv, 1.0);
    }
  }
}

TEST(Transform, ClampsAtTheBoundary) {
  const TransformSpec fi{TransformFamily::fisher}, ll{TransformFamily::loglog};
  EXPECT_TRUE(std::isfinite(fi.apply(1.0)));
  EXPECT_TRUE(std::isfinite(fi.apply(-1.0)));
  EXPECT_TRUE(std::isfinite(ll.apply(-1.0)));
  EXPECT_EQ(fi.apply(1.0), fi.apply(1.0 - 1e-6));
  EXPECT_NEAR(fi.derivative_bound(-0.5, 0.5), 8.0 / 3.0, 1e-12);
}

TEST(Concordance, Examples) {
  EXPECT_EQ(concordance(Concordance::g1, {0, 0}, {1, 1}), 3.0);
  EXPECT_EQ(concordance(Concordance::g2, {0, 0}, {1, 1}), 1.0);
  EXPECT_EQ(concordance(Concordance::g2, {0, 0}, {0, 1}), 0.0);
  EXPECT_EQ(concordance(Concordance::g1, {0.3, 0.3}, {0.3, 0.3}), -1.0);
  EXPECT_EQ(concordance(Concordance::g3, {0, 1}, {1, 0}), -3.0);
  EXPECT_EQ(concordance_constant(Concordance::g2), 2.0);
  EXPECT_EQ(concordance_constant(Concordance::g1), 4.0);
  EXPECT_THROW(concordance(Concordance::g2, {NAN, 0}, {1, 1}), ArgumentError);
}

TEST(Concordance, RangesAndSymmetryMatchOracle) {
  Rng rng(29);
  const auto d = support::random_obs(rng, 40, 1, true);
  for (const auto& a : d)
    for (const auto& b : d) {
      const Pair pa{a.x1, a.x2}, pb{b.x1, b.x2};
      EXPECT_EQ(concordance(Concordance::g2, pa, pb), concordance(Concordance::g2, pb, pa));
      for (int v = 1; v <= 3; ++v) {
        const auto g = static_cast<Concordance>(v - 1);
        EXPECT_EQ(concordance(g, pa, pb), oracle::g(v, a, b));
      }
      const double g1 = concordance(Concordance::g1, pa, pb);
      EXPECT_TRUE(g1 == -1.0 || g1 == 3.0);
    }
}

TEST(Ckt, TwoPointExamples) {
  const Sample s = Sample::univariate({0, 1}, {0, 1}, {0.5, 0.5});
  const KernelSpec k(KernelFamily::epanechnikov, 0.5);
  const std::vector<double> z{0.5};
  EXPECT_DOUBLE_EQ(ckt_at(s, z, k, {Concordance::g2, true}).value, 0.5);
  EXPECT_DOUBLE_EQ(ckt_at(s, z, k, {Concordance::g2, false}).value, 1.0);
  const Sample one = Sample::univariate({0}, {0}, {0.5});
  EXPECT_THROW(ckt_at(one, z, k), DegenerateInputError);
}

TEST(Ckt, MatchesNaiveDoubleLoop) {
  Rng rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t dim = rep % 3 == 0 ? 2 : 1;
    const bool gauss = rep % 2 == 0;
    const auto d = support::random_obs(rng, 20 + rng.below(180), dim, rep % 5 == 0);
    const Sample s = support::to_sample(d);
    std::vector<double> z(dim);
    for (auto& v : z) v = 0.2 + 0.6 * rng.uniform();
    const double h = 0.3;
    const KernelSpec k(gauss ? KernelFamily::gaussian : KernelFamily::epanechnikov, h, dim);
    for (int v = 1; v <= 3; ++v)
      for (bool diag : {true, false}) {
        const auto est = ckt_at(s, z, k, {static_cast<Concordance>(v - 1), diag});
        EXPECT_NEAR(est.raw, oracle::ckt(d, z, gauss, h, v, diag), 1e-12);
        EXPECT_EQ(est.value, std::clamp(est.raw, -1.0, 1.0));
        EXPECT_EQ(est.clipped, est.raw != est.value);
      }
  }
}

TEST(Ckt, G2StaysInRangeAndIsSymmetricInCoordinates) {
  Rng rng(37);
  for (int rep = 0; rep < 20; ++rep) {
    auto d = support::random_obs(rng, 100, 1, rep % 2 == 0);
    const std::vector<double> z{0.5};
    const KernelSpec k(KernelFamily::gaussian, 0.2);
    const auto a = ckt_at(support::to_sample(d), z, k);
    EXPECT_GE(a.raw, -1.0);
    EXPECT_LE(a.raw, 1.0);
    for (auto& o : d) std::swap(o.x1, o.x2);
    EXPECT_NEAR(ckt_at(support::to_sample(d), z, k).raw, a.raw, 1e-14);
  }
}

TEST(Ckt, InvariantUnderIncreasingMaps) {
  Rng rng(41);
  auto d = support::random_obs(rng, 150, 1);
  const std::vector<double> z{0.4};
  const KernelSpec k(KernelFamily::epanechnikov, 0.25);
  std::vector<double> before;
  for (int v = 0; v < 3; ++v) before.push_back(ckt_at(support::to_sample(d), z, k, {static_cast<Concordance>(v)}).raw);
  for (auto& o : d) {
    o.x1 = std::exp(o.x1);
    o.x2 = o.x2 * o.x2 * o.x2 + 2.0;
  }
  for (int v = 0; v < 3; ++v)
    EXPECT_EQ(ckt_at(support::to_sample(d), z, k, {static_cast<Concordance>(v)}).raw, before[static_cast<std::size_t>(v)]);
}

TEST(Ckt, IndependentPairsNearZero) {
  Rng rng(43);
  std::vector<double> a(5000), b(5000), z(5000);
  for (std::size_t i = 0; i < 5000; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
    z[i] = rng.uniform();
  }
  const std::vector<double> q{0.5};
  EXPECT_NEAR(ckt_at(Sample::univariate(a, b, z), q, KernelSpec(KernelFamily::epanechnikov, 0.1)).value, 0.0, 0.1);
}

TEST(Ckt, BatchMatchesPointwiseAndRecordsFailures) {
  Rng rng(47);
  const Sample s = support::to_sample(support::random_obs(rng, 300, 1));
  const KernelSpec k(KernelFamily::epanechnikov, 0.05);
  PointList pts = equispaced_grid(0.0, 1.0, 21);
  pts.push_back({5.0});
  const auto seq = ckt_batch(s, pts, k, {}, 1);
  const auto par = ckt_batch(s, pts, k, {}, 4);
  ASSERT_EQ(seq.size(), pts.size());
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    ASSERT_TRUE(seq[i].ok());
    EXPECT_EQ(seq[i].estimate->value, ckt_at(s, pts[i], k).value);
    EXPECT_EQ(par[i].estimate->value, seq[i].estimate->value);
  }
  EXPECT_FALSE(seq.back().ok());
  EXPECT_FALSE(seq.back().error.empty());
}

TEST(Gn, ThreePointsMatchesTripleLoop) {
  const Sample s = Sample::univariate({0.1, 0.7, 0.3}, {0.2, 0.9, 0.4}, {0.5, 0.45, 0.55});
  const std::vector<oracle::Obs> d{{0.1, 0.2, {0.5}}, {0.7, 0.9, {0.45}}, {0.3, 0.4, {0.55}}};
  const std::vector<double> z{0.5};
  const KernelSpec k(KernelFamily::epanechnikov, 0.2);
  EXPECT_NEAR(gn_moment(s, z, k), oracle::gn(d, z, false, 0.2, 2), 1e-15);
  const Sample two = Sample::univariate({0, 1}, {0, 1}, {0.5, 0.5});
  EXPECT_THROW(gn_moment(two, z, k), DegenerateInputError);
}

TEST(Gn, ExactForSmallSamplesInAllModes) {
  Rng rng(53);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 3 + rng.below(28);
    const auto d = support::random_obs(rng, n, 1, rep % 3 == 0);
    const Sample s = support::to_sample(d);
    const std::vector<double> z{0.5};
    const bool gauss = rep % 2 == 0;
    const KernelSpec k(gauss ? KernelFamily::gaussian : KernelFamily::epanechnikov, 0.6);
    for (int v = 1; v <= 3; ++v) {
      GnOptions loop;
      loop.variant = static_cast<Concordance>(v - 1);
      GnOptions reduced = loop;
      reduced.exact_triple_budget = 0;
      const double ref = oracle::gn(d, z, gauss, 0.6, v);
      EXPECT_NEAR(gn_moment(s, z, k, loop), ref, 1e-13);
      EXPECT_NEAR(gn_moment(s, z, k, reduced), ref, 1e-13);
      if (v == 2) {
        EXPECT_GE(ref, -1.0);
        EXPECT_LE(ref, 1.0);
      }
    }
  }
}

TEST(Gn, SubsamplingIsSeededAndCloseToExact) {
  Rng rng(59);
  const Sample s = support::to_sample(support::random_obs(rng, 200, 1));
  const std::vector<double> z{0.5};
  const KernelSpec k(KernelFamily::gaussian, 0.3);
  const double exact = gn_moment(s, z, k);
  GnOptions sub;
  sub.max_triples = 200000;
  sub.seed = 9;
  const double a = gn_moment(s, z, k, sub), b = gn_moment(s, z, k, sub);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a, exact, 0.05);
  sub.max_triples = 200ULL * 199ULL * 198ULL;
  EXPECT_NEAR(gn_moment(s, z, k, sub), exact, 1e-12);
}

TEST(KendallTau, MatchesPairwiseOracleWithTies) {
  Rng rng(61);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = support::random_obs(rng, 2 + rng.below(300), 1, rep % 2 == 0);
    std::vector<double> x, y;
    for (const auto& o : d) {
      x.push_back(o.x1);
      y.push_back(o.x2);
    }
    EXPECT_NEAR(kendall_tau(x, y), oracle::kendall_tau(x, y), 1e-12);
  }
  EXPECT_THROW(kendall_tau({1.0}, {1.0}), ArgumentError);
}
