// SPDX-License-Identifier: Apache-2.0
//
// Unified valence-arousal affect space: every emotion annotation, discrete or
// continuous, is projected into [-4,4]^2, then discretized onto a 9x9 integer
// grid whose 3x3 macro regions drive balanced sampling.
#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "emod/errors.hpp"

namespace emod {

struct VaPoint {
  double valence = 0.0;
  double arousal = 0.0;
};

// Discretized cell: integer levels in [-4,4], grid indices in [0,8]^2 and
// macro-region indices in [0,2]^2 (column = valence, row = arousal).
struct VaCell {
  int v_level = 0;
  int a_level = 0;
  int cell_col = 0;
  int cell_row = 0;
  int macro_col = 0;
  int macro_row = 0;

  int macro_linear() const { return macro_row * 3 + macro_col; }
};

struct DiscreteLabel {
  std::string category;
  std::string scheme;  // annotation scheme identifier, informational
};

// Raw self-report coordinates with their native scale bounds per axis.
struct ContinuousLabel {
  double valence = 0.0;
  double arousal = 0.0;
  double valence_min = -4.0;
  double valence_max = 4.0;
  double arousal_min = -4.0;
  double arousal_max = 4.0;
};

using EmotionLabel = std::variant<DiscreteLabel, ContinuousLabel>;

// Category -> V-A coordinates with a provenance note per entry. The bundled
// defaults are editable library choices, not measured values; pipelines must
// read coordinates from a table instance rather than constants.
class DiscreteMappingTable {
 public:
  struct Entry {
    VaPoint va;
    std::string provenance;
  };

  static DiscreteMappingTable bundled_default();
  // JSON file: {"category": {"va": [v, a], "provenance": "..."}}; any other
  // key inside an entry is rejected.
  static DiscreteMappingTable load(const std::string& path);
  void save(const std::string& path) const;

  void set(const std::string& category, VaPoint va, std::string provenance);
  bool contains(const std::string& category) const;
  VaPoint lookup(const std::string& category) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

// Projection into [-4,4]^2. Continuous labels are rescaled linearly per axis;
// out-of-range inputs clamp and bump *clamp_count when provided.
VaPoint to_va(const EmotionLabel& label, const DiscreteMappingTable& table,
              long* clamp_count = nullptr);

// Nearest integer level per axis, halves rounding away from zero.
VaCell quantize(const VaPoint& p);

double va_distance(const VaPoint& p, const VaPoint& q);

// Canonical 4-class downstream task: quadrant of the V-A plane.
int quadrant_class(const VaPoint& p);

}  // namespace emod
