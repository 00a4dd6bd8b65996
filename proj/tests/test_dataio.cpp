// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "emod/dataio.hpp"
#include "emod/fft.hpp"
#include "emod/rng.hpp"

using namespace emod;
namespace fs = std::filesystem;

namespace {

DatasetManifest tiny_manifest() {
  DatasetManifest m;
  m.name = "tiny";
  m.sampling_rate = 64.0;
  m.channels = {"A", "B", "C"};
  m.segment_seconds = 1.0;
  m.scheme.type = LabelScheme::Type::Continuous;
  m.scheme.valence_min = 1.0;
  m.scheme.valence_max = 9.0;
  m.scheme.arousal_min = 1.0;
  m.scheme.arousal_max = 9.0;
  m.segments_file = "tiny.seg";
  return m;
}

std::vector<EegSegment> random_segments(const DatasetManifest& m, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EegSegment> out;
  const auto t = static_cast<Eigen::Index>(m.segment_seconds * m.sampling_rate);
  for (int i = 0; i < count; ++i) {
    EegSegment s;
    s.data.resize(static_cast<Eigen::Index>(m.channels.size()), t);
    for (Eigen::Index k = 0; k < s.data.size(); ++k)
      s.data.data()[k] = static_cast<float>(rng.normal());
    s.sampling_rate = m.sampling_rate;
    s.subject_id = static_cast<std::uint32_t>(i % 3);
    ContinuousLabel lab;
    lab.valence = rng.uniform(1.0, 9.0);
    lab.arousal = rng.uniform(1.0, 9.0);
    lab.valence_min = lab.arousal_min = 1.0;
    lab.valence_max = lab.arousal_max = 9.0;
    s.label = lab;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::uint8_t> slurp_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("segment file round-trip is bit-exact") {
  auto m = tiny_manifest();
  auto segs = random_segments(m, 10, 5);
  const std::string path = "roundtrip.seg";
  write_segment_file(path, m, segs);
  auto loaded = read_segment_file(path, m);
  REQUIRE(loaded.size() == segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    CHECK((loaded[i].data.array() == segs[i].data.array()).all());
    CHECK(loaded[i].subject_id == segs[i].subject_id);
    const auto& a = std::get<ContinuousLabel>(loaded[i].label);
    const auto& b = std::get<ContinuousLabel>(segs[i].label);
    CHECK(a.valence == doctest::Approx(b.valence).epsilon(1e-6));
  }
  std::remove(path.c_str());
}

TEST_CASE("truncated files name the broken segment") {
  auto m = tiny_manifest();
  auto segs = random_segments(m, 4, 7);
  const std::string path = "trunc.seg";
  write_segment_file(path, m, segs);
  auto bytes = slurp_bytes(path);
  // cut inside the third segment's payload
  const std::size_t header = 8 + 4 + 4 + 4 + 4 + 4;
  const std::size_t per_seg = 4 + 1 + 8 + 4ull * 3 * 64;
  bytes.resize(header + 2 * per_seg + per_seg / 2);
  try {
    parse_segment_file(bytes, path, m);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("segment 2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("label scheme mismatches are rejected") {
  auto m = tiny_manifest();
  auto segs = random_segments(m, 2, 9);
  const std::string path = "scheme.seg";
  write_segment_file(path, m, segs);
  DatasetManifest discrete = m;
  discrete.scheme.type = LabelScheme::Type::Discrete;
  discrete.scheme.categories = {"x", "y"};
  try {
    read_segment_file(path, discrete);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("scheme") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("bad magic is rejected") {
  auto m = tiny_manifest();
  std::vector<std::uint8_t> junk(64, 0x42);
  CHECK_THROWS_AS(parse_segment_file(junk, "junk", m), DataError);
}

TEST_CASE("random byte mutations produce diagnostics, never crashes") {
  auto m = tiny_manifest();
  auto segs = random_segments(m, 3, 11);
  const std::string path = "fuzz.seg";
  write_segment_file(path, m, segs);
  auto original = slurp_bytes(path);
  std::remove(path.c_str());
  Rng rng(1234);
  int diagnostics = 0, successes = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    auto bytes = original;
    const int mode = static_cast<int>(rng.uniform_index(3));
    if (mode == 0) {
      bytes[static_cast<std::size_t>(rng.uniform_index(static_cast<std::int64_t>(bytes.size())))] =
          static_cast<std::uint8_t>(rng.uniform_index(256));
    } else if (mode == 1) {
      bytes.resize(static_cast<std::size_t>(rng.uniform_index(static_cast<std::int64_t>(bytes.size()))));
    } else {
      const int extra = 1 + static_cast<int>(rng.uniform_index(16));
      for (int i = 0; i < extra; ++i)
        bytes.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
    }
    try {
      auto loaded = parse_segment_file(bytes, "fuzz", m);
      ++successes;
      for (const auto& s : loaded) {
        CHECK(s.data.rows() == 3);
        CHECK(s.data.cols() == 64);
        CHECK(s.data.allFinite());
      }
    } catch (const Error&) {
      ++diagnostics;
    }
  }
  CHECK(diagnostics + successes == 10000);
  CHECK(diagnostics > 5000);  // structural fields dominate the mutation surface
}

TEST_CASE("manifest save/load round trip resolves paths") {
  fs::create_directories("manifest_dir");
  auto m = tiny_manifest();
  m.segments_file = "manifest_dir/tiny.seg";
  write_segment_file(m.segments_file, m, random_segments(m, 2, 13));
  save_manifest(m, "manifest_dir/manifest.json");
  auto loaded = load_manifest("manifest_dir/manifest.json");
  CHECK(loaded.name == "tiny");
  CHECK(loaded.channels == m.channels);
  CHECK(fs::equivalent(loaded.segments_file, m.segments_file));
  auto ds = load_dataset("manifest_dir/manifest.json");
  CHECK(ds.segments.size() == 2);
  CHECK(ds.va.size() == 2);
  fs::remove_all("manifest_dir");
}

TEST_CASE("manifest validation rejects duplicates and bad scales") {
  auto m = tiny_manifest();
  m.channels = {"A", "A"};
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = tiny_manifest();
  m.scheme.valence_min = 9.0;
  m.scheme.valence_max = 1.0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("synthetic generator hits the requested band-power ratio") {
  SyntheticSpec spec;
  spec.n_segments = 100;
  spec.channels = 4;
  spec.snr = 1.0;
  spec.seed = 21;
  auto result = generate_synthetic(spec);
  REQUIRE(result.segments.size() == 100);

  const Eigen::Index n = result.segments[0].data.cols();
  const double fs = spec.sampling_rate;
  const Eigen::Index b10 = static_cast<Eigen::Index>(10.0 * n / fs);
  const Eigen::Index b25 = static_cast<Eigen::Index>(25.0 * n / fs);
  std::set<Eigen::Index> planted;
  for (Eigen::Index d = -1; d <= 1; ++d) {
    planted.insert(b10 + d);
    planted.insert(b25 + d);
    planted.insert(n - b10 + d);
    planted.insert(n - b25 + d);
  }
  double p_band = 0.0, p_rest = 0.0;
  for (const auto& seg : result.segments) {
    for (Eigen::Index c = 0; c < seg.data.rows(); ++c) {
      Eigen::VectorXd row = seg.data.row(c).cast<double>().transpose();
      auto spec_c = fft::forward(row);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double p = std::norm(spec_c[static_cast<std::size_t>(k)]);
        if (planted.count(k)) p_band += p;
        else p_rest += p;
      }
    }
  }
  const double ratio = p_band / p_rest;
  CHECK(std::abs(ratio - spec.snr) <= 0.2 * spec.snr);
}

TEST_CASE("same latent label and subject share planted amplitudes but not noise") {
  SyntheticSpec spec;
  spec.label_mode = SyntheticSpec::LabelMode::Discrete9;
  spec.n_segments = 60;
  spec.n_subjects = 2;
  spec.seed = 31;
  auto result = generate_synthetic(spec);
  bool found = false;
  for (std::size_t i = 0; i < result.truth.size() && !found; ++i)
    for (std::size_t j = i + 1; j < result.truth.size(); ++j) {
      const auto& a = result.truth[i];
      const auto& b = result.truth[j];
      if (a.valence == b.valence && a.arousal == b.arousal && a.subject == b.subject) {
        CHECK(a.amp_valence == doctest::Approx(b.amp_valence));
        CHECK(a.amp_arousal == doctest::Approx(b.amp_arousal));
        CHECK_FALSE((result.segments[i].data.array() == result.segments[j].data.array()).all());
        found = true;
        break;
      }
    }
  CHECK(found);
}

TEST_CASE("discrete-9 labels cover the nine macro-region centers") {
  SyntheticSpec spec;
  spec.label_mode = SyntheticSpec::LabelMode::Discrete9;
  spec.n_segments = 300;
  spec.seed = 41;
  auto result = generate_synthetic(spec);
  std::set<std::string> cats;
  for (const auto& seg : result.segments)
    cats.insert(std::get<DiscreteLabel>(seg.label).category);
  CHECK(cats.size() == 9);
  for (const auto& cat : cats) {
    auto va = result.table.lookup(cat);
    CHECK((std::abs(va.valence) == 3.0 || va.valence == 0.0));
    CHECK((std::abs(va.arousal) == 3.0 || va.arousal == 0.0));
    auto cell = quantize(va);
    // every center lands in a distinct macro region
    CHECK(cell.v_level == static_cast<int>(va.valence));
    CHECK(cell.a_level == static_cast<int>(va.arousal));
  }
}

TEST_CASE("generation is deterministic under the seed") {
  SyntheticSpec spec;
  spec.n_segments = 12;
  spec.seed = 77;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  for (std::size_t i = 0; i < a.segments.size(); ++i)
    CHECK((a.segments[i].data.array() == b.segments[i].data.array()).all());
}

TEST_CASE("synthetic write + load_dataset round trip") {
  SyntheticSpec spec;
  spec.n_segments = 20;
  spec.seed = 51;
  auto result = generate_synthetic(spec);
  const auto manifest_path = write_synthetic(result, "synth_dir");
  auto ds = load_dataset(manifest_path);
  CHECK(ds.segments.size() == 20);
  CHECK(ds.manifest.channels.size() == 6);
  for (std::size_t i = 0; i < ds.segments.size(); ++i) {
    CHECK((ds.segments[i].data.array() == result.segments[i].data.array()).all());
    // labels decode to the latent coordinates
    CHECK(ds.va[i].valence == doctest::Approx(result.truth[i].valence).epsilon(1e-5));
    CHECK(ds.va[i].arousal == doctest::Approx(result.truth[i].arousal).epsilon(1e-5));
  }
  fs::remove_all("synth_dir");
}

TEST_CASE("synthetic spec json parsing names offending fields") {
  std::ofstream out("spec.json");
  out << R"({"n_segments": 10, "bogus": 1})";
  out.close();
  try {
    synthetic_spec_from_json_file("spec.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  std::ofstream ok("spec.json");
  ok << R"({"n_segments": 10, "label_mode": "discrete-9", "snr": 2.0})";
  ok.close();
  auto spec = synthetic_spec_from_json_file("spec.json");
  CHECK(spec.n_segments == 10);
  CHECK(spec.snr == doctest::Approx(2.0));
  CHECK(spec.label_mode == SyntheticSpec::LabelMode::Discrete9);
  std::remove("spec.json");
}
