#include <random>

#include <gtest/gtest.h>

#include "gnssbench/stats.hpp"
#include "gnssbench/synthetic.hpp"
#include "oracles.hpp"

using namespace gnssbench;

TEST(Percentile, NearestRank) {
  const EmpiricalDistribution d(std::vector<double>{5, 3, 1, 4, 2});
  EXPECT_EQ(percentile(d, 1.0), 5.0);
  EXPECT_EQ(percentile(d, 0.68), 4.0);
  EXPECT_EQ(percentile(d, 0.2), 1.0);
  EXPECT_EQ(percentile(d, 0.2000001), 2.0);
  EXPECT_EQ(nearest_rank(0.68, 5), 4u);
  EXPECT_THROW(percentile(d, 0.0), Error);
  EXPECT_THROW(percentile(d, 1.5), Error);
}

TEST(Percentile, Singleton) {
  const EmpiricalDistribution d(std::vector<double>{7});
  for (double p : {0.01, 0.5, 0.68, 0.95, 1.0})
    EXPECT_EQ(percentile(d, p), 7.0);
}

TEST(Percentile, EmptyIsAnError) {
  try {
    EmpiricalDistribution d(std::vector<double>{});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyReport);
  }
}

TEST(Percentile, RankSnapsRepresentationNoise) {
  // 0.95 * 100 evaluates to 94.99999999999999 in binary; the rank is still 95.
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i)
    v[static_cast<std::size_t>(i)] = i + 1;
  EXPECT_EQ(percentile(EmpiricalDistribution(v), 0.95), 95.0);
  EXPECT_EQ(percentile(EmpiricalDistribution(v), 0.07), 7.0);
  EXPECT_EQ(percentile(EmpiricalDistribution(v), 0.29), 29.0);
}

TEST(Percentile, MatchesSortAndIndexOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> size(1, 3000), num(1, 1000);
  std::lognormal_distribution<double> value(0.0, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(size(rng));
    for (double &x : v)
      x = value(rng);
    const EmpiricalDistribution d(v);
    for (int k = 0; k < 20; ++k) {
      const std::size_t n = num(rng);
      EXPECT_EQ(percentile(d, static_cast<double>(n) / 1000.0),
                oracle::sorted_index_percentile(v, n, 1000));
    }
  }
}

TEST(Percentile, AtLeastIsUpperTail) {
  const EmpiricalDistribution d(std::vector<double>{4, 5, 6, 7, 8, 9, 10, 11, 12, 13});
  // 68% of epochs see at least this many satellites.
  EXPECT_EQ(at_least_percentile(d, 0.68), 7.0);
  EXPECT_EQ(at_least_percentile(d, 1.0), 4.0);
}

TEST(Cdf, Points) {
  const auto one = cdf_points(EmpiricalDistribution(std::vector<double>{3}));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], std::make_pair(3.0, 1.0));
  const auto two = cdf_points(EmpiricalDistribution(std::vector<double>{1, 2, 1}));
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].first, 1.0);
  EXPECT_DOUBLE_EQ(two[0].second, 2.0 / 3.0);
  EXPECT_EQ(two[1], std::make_pair(2.0, 1.0));
}

TEST(Cdf, MatchesCountingOracle) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> u(0, 50);
  std::vector<double> v(777);
  for (double &x : v)
    x = u(rng) / 10.0;
  const auto pts = cdf_points(EmpiricalDistribution(v));
  for (int probe = 0; probe < 100; ++probe) {
    const double x = u(rng) / 10.0 + (probe % 2 ? 0.05 : 0.0);
    std::size_t count = 0;
    for (double s : v)
      count += s <= x;
    double step = 0.0;
    for (const auto &[value, fraction] : pts)
      if (value <= x)
        step = fraction;
    EXPECT_DOUBLE_EQ(step, static_cast<double>(count) / static_cast<double>(v.size()));
  }
}

TEST(ServiceLevels, FixtureFractions) {
  const std::vector<double> v = {0.1, 0.4, 1.0, 2.0, 6.0};
  const ServiceLevelReport r = service_level_availability(v);
  ASSERT_EQ(r.levels.size(), 4u);
  EXPECT_EQ(r.levels[0].name, "which_road");
  EXPECT_EQ(r.levels[0].availability, 0.8);
  EXPECT_EQ(r.levels[1].availability, 0.6);
  EXPECT_EQ(r.levels[2].availability, 0.4);
  EXPECT_EQ(r.levels[3].availability, 0.2);
}

TEST(ServiceLevels, PerfectAndBoundary) {
  const std::vector<double> zeros(10, 0.0);
  for (const ServiceLevel &l : service_level_availability(zeros).levels)
    EXPECT_EQ(l.availability, 1.0);
  const std::vector<double> boundary = {1.5, 1.4};
  EXPECT_EQ(service_level_availability(boundary).levels[1].availability, 0.5);
}

TEST(ServiceLevels, HalfNormalWhichLane) {
  const auto v = synthetic::half_normal_samples(100000, 1.0, 42);
  const double expected = std::erf(1.5 / std::sqrt(2.0));
  EXPECT_NEAR(expected, 0.866, 1e-3);
  EXPECT_NEAR(service_level_availability(v).levels[1].availability, expected, 0.01);
  const double p68 = percentile(EmpiricalDistribution(v), 0.68);
  EXPECT_NEAR(p68, oracle::half_normal_quantile(0.68, 1.0), 0.03 * 0.994);
  EXPECT_NEAR(oracle::half_normal_quantile(0.68, 1.0), 0.994, 1e-3);
}

TEST(Modes, Counting) {
  using M = PositionMode;
  const std::vector<M> modes = {M::RtkFixed, M::RtkFixed, M::RtkFloat, M::Sps, M::None};
  const ModeFractions f = mode_availability(modes);
  EXPECT_EQ(f[0], 0.4);
  EXPECT_EQ(f[1], 0.2);
  EXPECT_EQ(f[2], 0.0);
  EXPECT_EQ(f[3], 0.2);
  EXPECT_EQ(f[4], 0.2);
  const std::vector<M> fixed(9, M::RtkFixed);
  EXPECT_EQ(mode_availability(fixed)[0], 1.0);
  EXPECT_THROW(mode_availability({}), Error);
}

TEST(Modes, GeneratorMarginals) {
  const ModeFractions target = {0.499, 0.141, 0.003, 0.330, 0.027};
  synthetic::ModeSampler sampler(target);
  std::mt19937_64 rng(8);
  std::vector<PositionMode> modes(100000);
  for (auto &m : modes)
    m = sampler(rng);
  const ModeFractions f = mode_availability(modes);
  for (std::size_t i = 0; i < f.size(); ++i)
    EXPECT_NEAR(f[i], target[i], 0.005);
}

TEST(CorrectionAge, Counting) {
  const std::vector<std::optional<double>> ages = {0.5, 1.0, 9.0, 130.0};
  EXPECT_EQ(correction_age_availability(ages), (std::vector<double>{0.5, 0.75, 0.75}));
  const std::vector<std::optional<double>> none(6);
  EXPECT_EQ(correction_age_availability(none), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_THROW(correction_age_availability(ages, {10.0, 2.0}), Error);
}

TEST(CorrectionAge, GeneratorShareBelowTwoSeconds) {
  std::mt19937_64 rng(12);
  std::vector<std::optional<double>> ages(100000);
  for (auto &a : ages)
    a = synthetic::sample_correction_age({}, rng);
  EXPECT_NEAR(correction_age_availability(ages)[0], 0.96, 0.005);
}
