// SPDX-License-Identifier: Apache-2.0
#include "emod/sampler.hpp"

#include <algorithm>
#include <unordered_set>

namespace emod {

namespace {

int chebyshev(int r1, int r2) {
  const int c1 = r1 / 3, w1 = r1 % 3;
  const int c2 = r2 / 3, w2 = r2 % 3;
  return std::max(std::abs(c1 - c2), std::abs(w1 - w2));
}

// Nearest non-empty region; ties resolved by lowest (macro_col, macro_row),
// which is exactly the lowest linear index.
int resolve_fallback(const std::array<std::vector<int>, 9>& regions, int region) {
  if (!regions[region].empty()) return region;
  int best = -1, best_d = 99;
  for (int r = 0; r < 9; ++r) {
    if (regions[r].empty()) continue;
    const int d = chebyshev(region, r);
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

}  // namespace

SampleIndex build_index(const std::vector<std::vector<VaPoint>>& datasets_va) {
  if (datasets_va.empty()) throw ConfigError("build_index: no datasets");
  SampleIndex index;
  for (std::size_t d = 0; d < datasets_va.size(); ++d) {
    const auto& va = datasets_va[d];
    if (va.empty())
      throw ConfigError("build_index: dataset " + std::to_string(d) + " has no segments");
    SampleIndex::DatasetBuckets buckets;
    buckets.va = va;
    for (std::size_t s = 0; s < va.size(); ++s) {
      const VaCell cell = quantize(va[s]);
      buckets.regions[region_linear(cell.macro_col, cell.macro_row)].push_back(
          static_cast<int>(s));
    }
    for (int r = 0; r < 9; ++r) buckets.fallback[r] = resolve_fallback(buckets.regions, r);
    index.datasets.push_back(std::move(buckets));
  }
  return index;
}

ContrastBatch next_batch(const SampleIndex& index, int rounds_m, Rng& rng) {
  if (rounds_m < 1) throw ConfigError("next_batch: rounds must be >= 1");
  ContrastBatch batch;
  batch.items.reserve(static_cast<std::size_t>(index.dataset_count()) * 9 * rounds_m);
  for (int d = 0; d < index.dataset_count(); ++d) {
    const auto& ds = index.datasets[d];
    for (int round = 0; round < rounds_m; ++round) {
      std::array<std::unordered_set<int>, 9> used;
      for (int region = 0; region < 9; ++region) {
        const int target = ds.fallback[region];
        const auto& bucket = ds.regions[target];
        auto& taken = used[target];
        int pick = -1;
        if (taken.size() < bucket.size()) {
          // rejection sampling over the unused remainder stays uniform
          for (;;) {
            const int cand = bucket[static_cast<std::size_t>(
                rng.uniform_index(static_cast<std::int64_t>(bucket.size())))];
            if (!taken.count(cand)) {
              pick = cand;
              break;
            }
          }
          taken.insert(pick);
        } else {
          pick = bucket[static_cast<std::size_t>(
              rng.uniform_index(static_cast<std::int64_t>(bucket.size())))];
        }
        BatchItem item;
        item.dataset = d;
        item.segment = pick;
        item.round = round;
        item.region = region;
        item.fallback_used = target != region;
        item.va = ds.va[static_cast<std::size_t>(pick)];
        batch.items.push_back(item);
      }
    }
  }
  return batch;
}

}  // namespace emod
