// SPDX-License-Identifier: Apache-2.0
//
// Macro-region-balanced batch construction: every batch holds n x 9 x m
// segments (n datasets, 9 affective macro regions, m rounds), with empty
// regions falling back to their Chebyshev-nearest non-empty neighbour.
#pragma once

#include <array>
#include <vector>

#include "emod/errors.hpp"
#include "emod/rng.hpp"
#include "emod/va_space.hpp"

namespace emod {

// Regions are addressed in fixed lexicographic (macro_col, macro_row) order;
// region_linear = macro_col * 3 + macro_row.
inline int region_linear(int macro_col, int macro_row) { return macro_col * 3 + macro_row; }

struct SampleIndex {
  struct DatasetBuckets {
    std::array<std::vector<int>, 9> regions;  // segment ids per macro region
    std::array<int, 9> fallback;              // resolved draw target per region
    std::vector<VaPoint> va;                  // per segment id
  };
  std::vector<DatasetBuckets> datasets;

  int dataset_count() const { return static_cast<int>(datasets.size()); }
};

struct BatchItem {
  int dataset = 0;
  int segment = 0;  // id within the dataset
  int round = 0;
  int region = 0;          // region requested (lexicographic linear index)
  bool fallback_used = false;
  VaPoint va;
};

// Items are ordered dataset-major, then round, then region, so positions are
// addressable deterministically: size == n * m * 9.
struct ContrastBatch {
  std::vector<BatchItem> items;
  std::size_t size() const { return items.size(); }
  auto begin() const { return items.begin(); }
  auto end() const { return items.end(); }
};

// Buckets every segment of every dataset by quantize(va).macro region.
// Throws ConfigError for a dataset without any segments.
SampleIndex build_index(const std::vector<std::vector<VaPoint>>& datasets_va);

// One batch: for each dataset and each of m rounds, one uniformly random
// segment per region (fallbacks for empty regions). Draws are without
// replacement within a round per bucket whenever the bucket is large enough,
// and with replacement across batches.
ContrastBatch next_batch(const SampleIndex& index, int rounds_m, Rng& rng);

}  // namespace emod
