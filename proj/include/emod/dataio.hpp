// SPDX-License-Identifier: Apache-2.0
//
// Dataset files: JSON manifests describing a dataset plus a binary segment
// container, and the synthetic EEG generator used for benchmarking.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emod/signal.hpp"
#include "emod/va_space.hpp"

namespace emod {

struct LabelScheme {
  enum class Type { Discrete, Continuous };
  Type type = Type::Continuous;
  // discrete
  std::vector<std::string> categories;
  std::string mapping_table;  // path, empty means bundled default table
  // continuous raw scale bounds per axis
  double valence_min = 1.0, valence_max = 9.0;
  double arousal_min = 1.0, arousal_max = 9.0;
};

struct DatasetManifest {
  std::string name;
  double sampling_rate = 0.0;
  std::vector<std::string> channels;  // global electrode identifiers
  double segment_seconds = 0.0;
  LabelScheme scheme;
  std::string segments_file;  // resolved to an absolute path on load

  void validate() const;
};

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Binary segment container. Header: magic "EMODSEG1", version u32,
// n_segments u32, n_channels u32, n_samples u32, sampling_rate f32. Then per
// segment: subject_id u32, label tag u8 (0 = discrete: category id u16;
// 1 = continuous: valence f32, arousal f32), and the channel-major
// little-endian float32 payload.
void write_segment_file(const std::string& path, const DatasetManifest& manifest,
                        const std::vector<EegSegment>& segments);
std::vector<EegSegment> read_segment_file(const std::string& path,
                                          const DatasetManifest& manifest);
std::vector<EegSegment> parse_segment_file(std::vector<std::uint8_t> bytes,
                                           const std::string& origin,
                                           const DatasetManifest& manifest);

// A loaded dataset with labels projected into the unified V-A space.
struct Dataset {
  DatasetManifest manifest;
  std::vector<EegSegment> segments;
  std::vector<VaPoint> va;
  std::vector<int> channel_ids;  // filled by whoever owns the channel registry
  long clamp_warnings = 0;
};

Dataset load_dataset(const std::string& manifest_path);
Dataset make_dataset(DatasetManifest manifest, std::vector<EegSegment> segments,
                     const DiscreteMappingTable& table);

// ---------------------------------------------------------------------------
// synthetic benchmark generator
// ---------------------------------------------------------------------------

// Signal model per channel: pink-noise background plus two planted
// oscillations, a 10 Hz tone whose amplitude is affine in valence and a 25 Hz
// tone affine in arousal, mixed with channel gains and per-subject jitter.
// The per-segment planted-to-background power ratio equals snr exactly.
struct SyntheticSpec {
  std::string name = "synthetic";
  int n_subjects = 4;
  int n_segments = 600;
  int channels = 6;
  double sampling_rate = 128.0;
  double segment_seconds = 2.0;
  double snr = 1.0;
  std::uint64_t seed = 1;
  enum class LabelMode { Continuous, Discrete9 } label_mode = LabelMode::Continuous;
  std::string channel_prefix = "SYN";

  void validate() const;
};

struct SynthTruth {
  double valence = 0.0;
  double arousal = 0.0;
  double amp_valence = 0.0;
  double amp_arousal = 0.0;
  std::uint32_t subject = 0;
};

struct SynthResult {
  DatasetManifest manifest;
  std::vector<EegSegment> segments;
  std::vector<SynthTruth> truth;
  DiscreteMappingTable table;  // populated for Discrete9 labels
};

SynthResult generate_synthetic(const SyntheticSpec& spec);

// Writes manifest.json, data.seg and (for discrete labels) va_mapping.json
// into out_dir; returns the manifest path.
std::string write_synthetic(const SynthResult& result, const std::string& out_dir);

SyntheticSpec synthetic_spec_from_json_file(const std::string& path);

}  // namespace emod
