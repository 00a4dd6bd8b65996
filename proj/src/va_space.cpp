// SPDX-License-Identifier: Apache-2.0
#include "emod/va_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace emod {

namespace {

double clamp_axis(double v, long* clamp_count) {
  if (v < -4.0 || v > 4.0) {
    if (clamp_count) ++*clamp_count;
    return std::clamp(v, -4.0, 4.0);
  }
  return v;
}

double rescale_axis(double x, double lo, double hi) {
  if (hi == lo) throw ConfigError("to_va: degenerate scale [" + std::to_string(lo) + "," +
                                  std::to_string(hi) + "]");
  return -4.0 + 8.0 * (x - lo) / (hi - lo);
}

}  // namespace

DiscreteMappingTable DiscreteMappingTable::bundled_default() {
  DiscreteMappingTable t;
  const std::string note = "library default, editable";
  t.set("neutral", {0.0, 0.0}, "library default, symmetric center");
  t.set("happy", {2.8, 1.6}, note);
  t.set("excited", {2.6, 3.0}, note);
  t.set("amusement", {2.2, 1.9}, note);
  t.set("calm", {2.0, -2.0}, note);
  t.set("relaxed", {1.6, -2.4}, note);
  t.set("tired", {-1.4, -2.8}, note);
  t.set("sad", {-2.9, -1.1}, note);
  t.set("fear", {-2.6, 2.6}, note);
  t.set("anger", {-2.2, 2.4}, note);
  t.set("disgust", {-2.4, 1.2}, note);
  t.set("surprise", {1.0, 2.7}, note);
  return t;
}

DiscreteMappingTable DiscreteMappingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("mapping table: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("mapping table: invalid JSON in " + path + ": " + e.what());
  }
  if (!j.is_object()) throw DataError("mapping table: top level must be an object");
  DiscreteMappingTable t;
  for (const auto& [category, entry] : j.items()) {
    if (!entry.is_object()) throw DataError("mapping table: entry for '" + category + "' must be an object");
    for (const auto& [k, v] : entry.items()) {
      (void)v;
      if (k != "va" && k != "provenance")
        throw DataError("mapping table: unknown key '" + k + "' in entry '" + category + "'");
    }
    if (!entry.contains("va") || !entry["va"].is_array() || entry["va"].size() != 2)
      throw DataError("mapping table: entry '" + category + "' needs \"va\": [valence, arousal]");
    const double v = entry["va"][0].get<double>();
    const double a = entry["va"][1].get<double>();
    if (v < -4.0 || v > 4.0 || a < -4.0 || a > 4.0)
      throw DataError("mapping table: entry '" + category + "' outside [-4,4]");
    t.set(category, {v, a}, entry.value("provenance", std::string()));
  }
  return t;
}

void DiscreteMappingTable::save(const std::string& path) const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [cat, e] : entries_) {
    j[cat] = {{"va", {e.va.valence, e.va.arousal}}, {"provenance", e.provenance}};
  }
  std::ofstream out(path);
  if (!out) throw DataError("mapping table: cannot write " + path);
  out << j.dump(2) << '\n';
}

void DiscreteMappingTable::set(const std::string& category, VaPoint va, std::string provenance) {
  entries_[category] = Entry{va, std::move(provenance)};
}

bool DiscreteMappingTable::contains(const std::string& category) const {
  return entries_.count(category) > 0;
}

VaPoint DiscreteMappingTable::lookup(const std::string& category) const {
  auto it = entries_.find(category);
  if (it == entries_.end()) throw DomainError("mapping table: unknown category '" + category + "'");
  return it->second.va;
}

VaPoint to_va(const EmotionLabel& label, const DiscreteMappingTable& table, long* clamp_count) {
  if (const auto* d = std::get_if<DiscreteLabel>(&label)) {
    return table.lookup(d->category);
  }
  const auto& c = std::get<ContinuousLabel>(label);
  VaPoint p;
  p.valence = clamp_axis(rescale_axis(c.valence, c.valence_min, c.valence_max), clamp_count);
  p.arousal = clamp_axis(rescale_axis(c.arousal, c.arousal_min, c.arousal_max), clamp_count);
  return p;
}

VaCell quantize(const VaPoint& p) {
  VaCell c;
  c.v_level = std::clamp(static_cast<int>(std::round(p.valence)), -4, 4);
  c.a_level = std::clamp(static_cast<int>(std::round(p.arousal)), -4, 4);
  c.cell_col = c.v_level + 4;
  c.cell_row = c.a_level + 4;
  c.macro_col = c.cell_col / 3;
  c.macro_row = c.cell_row / 3;
  return c;
}

double va_distance(const VaPoint& p, const VaPoint& q) {
  const double dv = p.valence - q.valence;
  const double da = p.arousal - q.arousal;
  return std::sqrt(dv * dv + da * da);
}

int quadrant_class(const VaPoint& p) {
  return (p.valence > 0.0 ? 1 : 0) + (p.arousal > 0.0 ? 2 : 0);
}

}  // namespace emod
