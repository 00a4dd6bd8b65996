// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "emod/sampler.hpp"

using namespace emod;

namespace {

// One point per macro region, at the region centers (levels -3, 0, 3).
std::vector<VaPoint> one_per_region() {
  std::vector<VaPoint> va;
  for (int mc = 0; mc < 3; ++mc)
    for (int mr = 0; mr < 3; ++mr)
      va.push_back({static_cast<double>(3 * (mc - 1)), static_cast<double>(3 * (mr - 1))});
  return va;
}

}  // namespace

TEST_CASE("build_index buckets by macro region") {
  std::vector<VaPoint> all_center(40, VaPoint{0.0, 0.0});
  auto index = build_index({all_center});
  int non_empty = 0;
  for (int r = 0; r < 9; ++r)
    if (!index.datasets[0].regions[r].empty()) ++non_empty;
  CHECK(non_empty == 1);
  CHECK(index.datasets[0].regions[region_linear(1, 1)].size() == 40);

  auto singletons = build_index({one_per_region()});
  for (int r = 0; r < 9; ++r) CHECK(singletons.datasets[0].regions[r].size() == 1);
}

TEST_CASE("build_index rejects empty datasets") {
  CHECK_THROWS_AS(build_index({}), ConfigError);
  CHECK_THROWS_AS(build_index({std::vector<VaPoint>{}}), ConfigError);
}

TEST_CASE("uniform random points fill every bucket and counts sum") {
  Rng rng(3);
  std::vector<VaPoint> va;
  for (int i = 0; i < 1000; ++i) va.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4)});
  auto index = build_index({va});
  std::size_t total = 0;
  for (int r = 0; r < 9; ++r) {
    CHECK(!index.datasets[0].regions[r].empty());
    total += index.datasets[0].regions[r].size();
  }
  CHECK(total == 1000);
}

TEST_CASE("batch sizes follow n x 9 x m") {
  Rng rng(5);
  std::vector<std::vector<VaPoint>> eight(8, one_per_region());
  auto idx8 = build_index(eight);
  CHECK(next_batch(idx8, 4, rng).size() == 288);

  std::vector<std::vector<VaPoint>> two(2, one_per_region());
  CHECK(next_batch(build_index(two), 2, rng).size() == 36);

  auto idx1 = build_index({one_per_region()});
  auto b = next_batch(idx1, 1, rng);
  CHECK(b.size() == 9);
  std::array<int, 9> seen{};
  for (const auto& item : b) {
    ++seen[item.region];
    CHECK_FALSE(item.fallback_used);
  }
  for (int r = 0; r < 9; ++r) CHECK(seen[r] == 1);
}

TEST_CASE("per dataset and region multiplicity is m when regions are non-empty") {
  Rng rng(7);
  std::vector<VaPoint> va;
  for (int i = 0; i < 200; ++i) va.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4)});
  auto index = build_index({va, one_per_region(), va});
  const int m = 3;
  auto batch = next_batch(index, m, rng);
  CHECK(batch.size() == 3u * 9u * m);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& item : batch) ++counts[{item.dataset, item.region}];
  for (int d = 0; d < 3; ++d)
    for (int r = 0; r < 9; ++r) CHECK(counts[{d, r}] == m);
}

TEST_CASE("batch order is dataset-major then round then region") {
  Rng rng(11);
  auto index = build_index({one_per_region(), one_per_region()});
  auto batch = next_batch(index, 2, rng);
  std::size_t k = 0;
  for (int d = 0; d < 2; ++d)
    for (int round = 0; round < 2; ++round)
      for (int r = 0; r < 9; ++r, ++k) {
        CHECK(batch.items[k].dataset == d);
        CHECK(batch.items[k].round == round);
        CHECK(batch.items[k].region == r);
      }
}

TEST_CASE("empty regions fall back to the Chebyshev-nearest non-empty region") {
  // Single cluster in the corner macro region (0,0): every other region must
  // draw from there.
  std::vector<VaPoint> corner(10, VaPoint{-4.0, -4.0});
  auto index = build_index({corner});
  Rng rng(13);
  auto batch = next_batch(index, 1, rng);
  for (const auto& item : batch) {
    if (item.region != region_linear(0, 0)) CHECK(item.fallback_used);
    CHECK(item.va.valence == doctest::Approx(-4.0));
  }

  // Two occupied regions: (0,0) and (2,2). Region (0,1) is Chebyshev distance
  // 1 from (0,0) and 2 from (2,2), so it must resolve to (0,0). Region (1,1)
  // is distance 1 from both; the tie breaks to the lower (mc, mr).
  std::vector<VaPoint> two;
  for (int i = 0; i < 5; ++i) two.push_back({-4.0, -4.0});
  for (int i = 0; i < 5; ++i) two.push_back({4.0, 4.0});
  auto idx2 = build_index({two});
  CHECK(idx2.datasets[0].fallback[region_linear(0, 1)] == region_linear(0, 0));
  CHECK(idx2.datasets[0].fallback[region_linear(1, 1)] == region_linear(0, 0));
  CHECK(idx2.datasets[0].fallback[region_linear(2, 1)] == region_linear(2, 2));
  CHECK(idx2.datasets[0].fallback[region_linear(1, 2)] == region_linear(2, 2));
}

TEST_CASE("draws within one round avoid repeats when the bucket allows") {
  // All nine regions of a 9-point dataset are singletons except through
  // fallback; with a single non-empty bucket of size >= 9 a round must not
  // repeat segments.
  std::vector<VaPoint> corner(12, VaPoint{-4.0, -4.0});
  auto index = build_index({corner});
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto batch = next_batch(index, 1, rng);
    std::array<bool, 12> seen{};
    for (const auto& item : batch) {
      CHECK_FALSE(seen[item.segment]);
      seen[item.segment] = true;
    }
  }
}

TEST_CASE("same seed reproduces the identical batch stream") {
  Rng r1(42), r2(42);
  std::vector<VaPoint> va;
  Rng init(1);
  for (int i = 0; i < 300; ++i) va.push_back({init.uniform(-4, 4), init.uniform(-4, 4)});
  auto index = build_index({va, va});
  for (int b = 0; b < 20; ++b) {
    auto b1 = next_batch(index, 2, r1);
    auto b2 = next_batch(index, 2, r2);
    REQUIRE(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) {
      CHECK(b1.items[i].segment == b2.items[i].segment);
      CHECK(b1.items[i].dataset == b2.items[i].dataset);
    }
  }
}

TEST_CASE("within-bucket draw frequencies are uniform over many batches") {
  Rng init(19);
  std::vector<VaPoint> va;
  for (int i = 0; i < 180; ++i) va.push_back({init.uniform(-4, 4), init.uniform(-4, 4)});
  auto index = build_index({va});
  const int m = 2, batches = 10000;
  std::vector<long> draws(va.size(), 0);
  Rng rng(23);
  for (int b = 0; b < batches; ++b)
    for (const auto& item : next_batch(index, m, rng)) ++draws[item.segment];

  // each segment of a bucket with s members is expected in m*batches/s draws
  for (int r = 0; r < 9; ++r) {
    const auto& bucket = index.datasets[0].regions[r];
    if (bucket.empty()) continue;
    const double s = static_cast<double>(bucket.size());
    const double trials = static_cast<double>(m * batches);
    const double p = 1.0 / s;
    const double expect = trials * p;
    const double sigma = std::sqrt(trials * p * (1.0 - p));
    for (int id : bucket) {
      CHECK(std::abs(static_cast<double>(draws[id]) - expect) <= 3.0 * sigma + 1e-9);
    }
  }
}
