// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "emod/rng.hpp"
#include "emod/va_space.hpp"

using namespace emod;

TEST_CASE("continuous labels rescale linearly with exact endpoints") {
  DiscreteMappingTable table = DiscreteMappingTable::bundled_default();
  ContinuousLabel lo{1.0, 9.0, 1.0, 9.0, 1.0, 9.0};
  auto p = to_va(lo, table);
  CHECK(p.valence == doctest::Approx(-4.0));
  CHECK(p.arousal == doctest::Approx(4.0));

  ContinuousLabel mid{5.0, 5.0, 1.0, 9.0, 1.0, 9.0};
  auto m = to_va(mid, table);
  CHECK(m.valence == doctest::Approx(0.0));
  CHECK(m.arousal == doctest::Approx(0.0));
}

TEST_CASE("continuous mapping is monotone per axis") {
  DiscreteMappingTable table = DiscreteMappingTable::bundled_default();
  double prev = -5.0;
  for (double raw = 1.0; raw <= 9.0; raw += 0.25) {
    ContinuousLabel l{raw, 5.0, 1.0, 9.0, 1.0, 9.0};
    const double v = to_va(l, table).valence;
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("discrete lookup uses the table; neutral sits at the origin") {
  DiscreteMappingTable table = DiscreteMappingTable::bundled_default();
  auto p = to_va(DiscreteLabel{"neutral", ""}, table);
  CHECK(p.valence == doctest::Approx(0.0));
  CHECK(p.arousal == doctest::Approx(0.0));
  CHECK_THROWS_AS(to_va(DiscreteLabel{"no-such-emotion", ""}, table), DomainError);
}

TEST_CASE("degenerate scales are rejected") {
  DiscreteMappingTable table = DiscreteMappingTable::bundled_default();
  ContinuousLabel bad{3.0, 3.0, 3.0, 3.0, 1.0, 9.0};
  CHECK_THROWS_AS(to_va(bad, table), ConfigError);
}

TEST_CASE("out-of-range continuous values clamp and count") {
  DiscreteMappingTable table = DiscreteMappingTable::bundled_default();
  long clamps = 0;
  ContinuousLabel over{9.6, 0.4, 1.0, 9.0, 1.0, 9.0};
  auto p = to_va(over, table, &clamps);
  CHECK(p.valence == doctest::Approx(4.0));
  CHECK(clamps == 2);  // both axes overshoot their declared scale
}

TEST_CASE("quantize corner, center, and rounding rule") {
  auto corner = quantize(VaPoint{-4.0, -4.0});
  CHECK(corner.v_level == -4);
  CHECK(corner.cell_col == 0);
  CHECK(corner.cell_row == 0);
  CHECK(corner.macro_col == 0);
  CHECK(corner.macro_row == 0);

  auto center = quantize(VaPoint{0.0, 0.0});
  CHECK(center.cell_col == 4);
  CHECK(center.cell_row == 4);
  CHECK(center.macro_col == 1);
  CHECK(center.macro_row == 1);

  auto q = quantize(VaPoint{3.6, -2.4});
  CHECK(q.v_level == 4);
  CHECK(q.a_level == -2);
  CHECK(q.cell_col == 8);
  CHECK(q.cell_row == 2);
  CHECK(q.macro_col == 2);
  CHECK(q.macro_row == 0);

  // halves round away from zero
  CHECK(quantize(VaPoint{0.5, -0.5}).v_level == 1);
  CHECK(quantize(VaPoint{0.5, -0.5}).a_level == -1);
}

TEST_CASE("quantized labels never leave the grid") {
  DiscreteMappingTable table = DiscreteMappingTable::bundled_default();
  Rng rng(404);
  for (int i = 0; i < 100000; ++i) {
    ContinuousLabel l{rng.uniform(1.0, 9.0), rng.uniform(1.0, 9.0), 1.0, 9.0, 1.0, 9.0};
    auto c = quantize(to_va(l, table));
    CHECK(c.cell_col >= 0);
    CHECK(c.cell_col <= 8);
    CHECK(c.cell_row >= 0);
    CHECK(c.cell_row <= 8);
    CHECK(c.macro_col >= 0);
    CHECK(c.macro_col <= 2);
    CHECK(c.macro_row >= 0);
    CHECK(c.macro_row <= 2);
  }
}

TEST_CASE("va distance worked examples") {
  CHECK(va_distance({1.5, -2.0}, {1.5, -2.0}) == doctest::Approx(0.0));
  CHECK(va_distance({-4, -4}, {4, 4}) == doctest::Approx(8.0 * std::sqrt(2.0)));
  CHECK(va_distance({0, 0}, {3, 4}) == doctest::Approx(5.0));
}

TEST_CASE("va distance satisfies metric axioms on random triples") {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    VaPoint a{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    VaPoint b{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    VaPoint c{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    CHECK(va_distance(a, b) == doctest::Approx(va_distance(b, a)));
    CHECK(va_distance(a, b) >= 0.0);
    CHECK(va_distance(a, c) <= va_distance(a, b) + va_distance(b, c) + 1e-12);
  }
}

TEST_CASE("maximum distance excludes opposite corners at radius 5") {
  const double dmax = 5.0;
  const double corner = va_distance({-4, -4}, {4, 4});
  CHECK(corner == doctest::Approx(8.0 * std::sqrt(2.0)));
  CHECK(corner > dmax);
  CHECK(std::max(0.0, 1.0 - corner / dmax) == doctest::Approx(0.0));
}

TEST_CASE("quadrant classes split by sign") {
  CHECK(quadrant_class({-1, -1}) == 0);
  CHECK(quadrant_class({1, -1}) == 1);
  CHECK(quadrant_class({-1, 1}) == 2);
  CHECK(quadrant_class({1, 1}) == 3);
}

TEST_CASE("mapping table file round-trip and schema validation") {
  DiscreteMappingTable t = DiscreteMappingTable::bundled_default();
  const std::string path = "va_table_test.json";
  t.save(path);
  auto loaded = DiscreteMappingTable::load(path);
  CHECK(loaded.entries().size() == t.entries().size());
  CHECK(loaded.lookup("happy").valence == doctest::Approx(t.lookup("happy").valence));

  std::ofstream bad(path);
  bad << R"({"joy": {"va": [1.0, 2.0], "provenance": "x", "extra": 1}})";
  bad.close();
  CHECK_THROWS_AS(DiscreteMappingTable::load(path), DataError);

  std::ofstream bad2(path);
  bad2 << R"({"joy": {"va": [99.0, 0.0], "provenance": "x"}})";
  bad2.close();
  CHECK_THROWS_AS(DiscreteMappingTable::load(path), DataError);
  std::remove(path.c_str());
}
