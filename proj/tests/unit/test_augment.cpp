#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "csst/augment.hpp"
#include "csst/error.hpp"
#include "support.hpp"

using namespace csst;
using csst::testing::make_poi;

namespace {

Poi poi_with(const std::string& id, double area, double total) {
  Poi p = make_poi(id, 0.0, 0.0, area);
  p.reports = {total};
  return p;
}

// Median by sorting, averaging the two middle elements.
double median_oracle(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<Poi> random_city(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Poi> pois;
  for (std::size_t i = 0; i < n; ++i)
    pois.push_back(poi_with("p" + std::to_string(i), std::exp(rng.normal(5.0, 1.0)), std::floor(rng.uniform(0, 50))));
  return pois;
}

}  // namespace

TEST(QuantileBins, MedianSplit) {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto b = quantile_bins(v, 2);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_DOUBLE_EQ(b[0], median_oracle(v));
  EXPECT_DOUBLE_EQ(b[0], 5.5);
  EXPECT_EQ(assign_bin(b, 5.0), 0u);
  EXPECT_EQ(assign_bin(b, 6.0), 1u);
  EXPECT_EQ(assign_bin(b, 5.5), 0u);
}

TEST(QuantileBins, MedianOracleOnRandomData) {
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 7u, 60u, 101u}) {
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(rng.normal());
    EXPECT_DOUBLE_EQ(quantile_bins(v, 2)[0], median_oracle(v)) << n;
  }
}

TEST(QuantileBins, DegenerateInputs) {
  std::vector<double> same(20, 4.0);
  const BinIndex idx = build_bin_index("x", same, 10);
  for (auto b : idx.bin_of) EXPECT_EQ(b, 0u);
  EXPECT_TRUE(quantile_bins(same, 1).empty());
  const BinIndex one = build_bin_index("x", std::vector<double>{3, 1, 2}, 1);
  for (auto b : one.bin_of) EXPECT_EQ(b, 0u);
  EXPECT_THROW(quantile_bins(std::vector<double>{}, 3), ConfigError);
  EXPECT_THROW(quantile_bins(same, 0), ConfigError);
}

TEST(QuantileBins, BoundariesSortedAndAssignmentMonotone) {
  Rng rng(8);
  std::vector<double> v;
  for (int i = 0; i < 500; ++i) v.push_back(std::floor(rng.uniform(0, 20)));
  const BinIndex idx = build_bin_index("x", v, 10);
  EXPECT_TRUE(std::is_sorted(idx.boundaries.begin(), idx.boundaries.end()));
  std::size_t total = 0;
  for (const auto& m : idx.members) total += m.size();
  EXPECT_EQ(total, v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); j += 7)
      if (v[i] <= v[j]) ASSERT_LE(idx.bin_of[i], idx.bin_of[j]);
}

TEST(BuildIndex, SharedCellPoolsHoldEachOther) {
  // a, b share both bins; c and d sit alone.
  std::vector<Poi> pois{poi_with("a", 10, 1), poi_with("b", 10, 1), poi_with("c", 1000, 1), poi_with("d", 1000, 500)};
  const AugmentationIndex idx = build_index(pois, 2, 2);
  EXPECT_EQ(idx.pool(0), (std::vector<std::size_t>{1}));
  EXPECT_EQ(idx.pool(1), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(idx.pool(2).empty());
  EXPECT_TRUE(idx.pool(3).empty());
  EXPECT_EQ(idx.area_pool(3), (std::vector<std::size_t>{2}));
}

TEST(BuildIndex, IdenticalPoisShareOneCell) {
  std::vector<Poi> pois;
  for (int i = 0; i < 6; ++i) pois.push_back(poi_with("p" + std::to_string(i), 50, 3));
  const AugmentationIndex idx = build_index(pois, 10, 10);
  for (std::size_t i = 0; i < pois.size(); ++i) {
    EXPECT_EQ(idx.pool_size(i), 5u);
    const auto p = idx.pool(i);
    EXPECT_EQ(std::count(p.begin(), p.end(), i), 0);
  }
}

TEST(BuildIndex, PoolMembersShareBothBins) {
  const auto pois = random_city(400, 2);
  const AugmentationIndex idx = build_index(pois, 10, 10);
  for (std::size_t i = 0; i < pois.size(); ++i)
    for (std::size_t j : idx.pool(i)) {
      ASSERT_NE(j, i);
      ASSERT_EQ(idx.area().bin_of[j], idx.area().bin_of[i]);
      ASSERT_EQ(idx.report().bin_of[j], idx.report().bin_of[i]);
    }
}

TEST(SamplePositives, TwoMemberPoolWithoutReplacement) {
  std::vector<Poi> pois{poi_with("a", 10, 1), poi_with("b", 10, 1), poi_with("c", 10, 1)};
  const AugmentationIndex idx = build_index(pois, 1, 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const PositiveSample ps = idx.sample_positives(0, 2, rng);
    EXPECT_EQ(ps.source, PositiveSource::SameCell);
    EXPECT_EQ(std::set<std::size_t>(ps.positives.begin(), ps.positives.end()), (std::set<std::size_t>{1, 2}));
  }
}

TEST(SamplePositives, SingletonPoolRepeats) {
  std::vector<Poi> pois{poi_with("a", 10, 1), poi_with("b", 10, 1)};
  const AugmentationIndex idx = build_index(pois, 1, 1);
  Rng rng(1);
  EXPECT_EQ(idx.sample_positives(0, 3, rng).positives, (std::vector<std::size_t>{1, 1, 1}));
}

TEST(SamplePositives, FallbackAndUnaugmentable) {
  std::vector<Poi> pois{poi_with("a", 10, 1), poi_with("b", 10, 100), poi_with("c", 5000, 1)};
  // Two area bins: {a, b} and {c}; report bins split a from b.
  AugmentationIndex idx(build_bin_index("area", std::vector<double>{10, 10, 5000}, 2),
                        build_bin_index("total_reports", std::vector<double>{1, 100, 1}, 2));
  Rng rng(4);
  const PositiveSample fb = idx.sample_positives(0, 2, rng);
  EXPECT_EQ(fb.source, PositiveSource::AreaFallback);
  EXPECT_EQ(fb.positives, (std::vector<std::size_t>{1, 1}));
  const PositiveSample none = idx.sample_positives(2, 2, rng);
  EXPECT_EQ(none.source, PositiveSource::Unaugmentable);
  EXPECT_TRUE(none.positives.empty());
  EXPECT_FALSE(idx.augmentable(2));
  EXPECT_THROW(idx.sample_positives(0, 0, rng), ConfigError);
}

TEST(SamplePositives, SubsetOfIntersectionOverRandomCities) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pois = random_city(300, seed);
    const AugmentationIndex idx = build_index(pois, 10, 10);
    Rng rng(seed + 100);
    for (std::size_t i = 0; i < pois.size(); ++i) {
      const PositiveSample s = idx.sample_positives(i, 20, rng);
      ASSERT_EQ(s.positives.size(), s.source == PositiveSource::Unaugmentable ? 0u : 20u);
      const std::size_t pool = s.source == PositiveSource::SameCell ? idx.pool_size(i) : idx.area_pool_size(i);
      if (pool >= 20) {
        EXPECT_EQ(std::set<std::size_t>(s.positives.begin(), s.positives.end()).size(), 20u);
      }
      for (std::size_t j : s.positives) {
        ASSERT_NE(j, i);
        ASSERT_EQ(idx.area().bin_of[j], idx.area().bin_of[i]);
        if (s.source == PositiveSource::SameCell) ASSERT_EQ(idx.report().bin_of[j], idx.report().bin_of[i]);
      }
    }
  }
}

TEST(SamplePositives, ReproducibleFromSeed) {
  const auto pois = random_city(200, 6);
  const AugmentationIndex idx = build_index(pois, 10, 10);
  Rng a(77), b(77);
  for (std::size_t i = 0; i < pois.size(); ++i)
    ASSERT_EQ(idx.sample_positives(i, 5, a).positives, idx.sample_positives(i, 5, b).positives);
}

TEST(DrawPositions, DistinctWhenPossible) {
  Rng rng(9);
  for (std::size_t n = 1; n < 30; ++n)
    for (std::size_t m = 1; m <= n; ++m) {
      const auto d = draw_positions(n, m, rng);
      ASSERT_EQ(d.size(), m);
      ASSERT_EQ(std::set<std::size_t>(d.begin(), d.end()).size(), m);
      for (auto x : d) ASSERT_LT(x, n);
    }
}

TEST(DrawPositions, ApproximatelyUniform) {
  Rng rng(10);
  std::vector<int> count(10, 0);
  for (int t = 0; t < 20000; ++t)
    for (auto x : draw_positions(10, 3, rng)) ++count[x];
  for (int c : count) EXPECT_NEAR(c / 6000.0, 1.0, 0.05);
}
