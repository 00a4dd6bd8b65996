// SPDX-License-Identifier: Apache-2.0
#include "emod/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "emod/fft.hpp"
#include "emod/rng.hpp"

namespace emod {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'E', 'M', 'O', 'D', 'S', 'E', 'G', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr double kPi = 3.141592653589793238462643383279502884;

class ByteWriter {
 public:
  explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open for writing: " + path);
  }
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void close() {
    out_.close();
    if (!out_) throw DataError("write failed");
  }

 private:
  std::ofstream out_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  template <typename T>
  T get(const std::string& what) {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > data_.size())
      throw DataError(origin_ + ": truncated file while reading " + what);
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* p, std::size_t n, const std::string& what) {
    if (pos_ + n > data_.size())
      throw DataError(origin_ + ": truncated file while reading " + what);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::vector<std::uint8_t> data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  return data;
}

Eigen::Index expected_samples(const DatasetManifest& m) {
  const double exact = m.segment_seconds * m.sampling_rate;
  const auto n = static_cast<Eigen::Index>(std::llround(exact));
  if (n < 1 || std::abs(exact - static_cast<double>(n)) > 1e-6)
    throw ConfigError("manifest '" + m.name +
                      "': segment_seconds * sampling_rate must be a positive integer");
  return n;
}

}  // namespace

void DatasetManifest::validate() const {
  if (name.empty()) throw ConfigError("manifest: empty name");
  if (!(sampling_rate > 0)) throw ConfigError("manifest '" + name + "': sampling_rate must be > 0");
  if (!(segment_seconds > 0))
    throw ConfigError("manifest '" + name + "': segment_seconds must be > 0");
  if (channels.empty()) throw ConfigError("manifest '" + name + "': no channels");
  std::set<std::string> unique(channels.begin(), channels.end());
  if (unique.size() != channels.size())
    throw ConfigError("manifest '" + name + "': duplicate channel names");
  if (scheme.type == LabelScheme::Type::Discrete) {
    if (scheme.categories.empty())
      throw ConfigError("manifest '" + name + "': discrete scheme without categories");
    std::set<std::string> ucat(scheme.categories.begin(), scheme.categories.end());
    if (ucat.size() != scheme.categories.size())
      throw ConfigError("manifest '" + name + "': duplicate categories");
  } else {
    if (!(scheme.valence_min < scheme.valence_max) || !(scheme.arousal_min < scheme.arousal_max))
      throw ConfigError("manifest '" + name + "': scale bounds must satisfy lo < hi");
  }
  expected_samples(*this);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path + "': invalid JSON: " + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.sampling_rate = j.at("sampling_rate").get<double>();
    m.channels = j.at("channels").get<std::vector<std::string>>();
    m.segment_seconds = j.at("segment_seconds").get<double>();
    m.segments_file = j.at("segments_file").get<std::string>();
    const auto& s = j.at("label_scheme");
    const std::string type = s.at("type").get<std::string>();
    if (type == "discrete") {
      m.scheme.type = LabelScheme::Type::Discrete;
      m.scheme.categories = s.at("categories").get<std::vector<std::string>>();
      m.scheme.mapping_table = s.value("mapping_table", std::string());
    } else if (type == "continuous") {
      m.scheme.type = LabelScheme::Type::Continuous;
      const auto vr = s.at("valence_range");
      const auto ar = s.at("arousal_range");
      m.scheme.valence_min = vr.at(0).get<double>();
      m.scheme.valence_max = vr.at(1).get<double>();
      m.scheme.arousal_min = ar.at(0).get<double>();
      m.scheme.arousal_max = ar.at(1).get<double>();
    } else {
      throw DataError("manifest '" + path + "': unknown label_scheme.type '" + type + "'");
    }
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  const fs::path dir = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (dir / p).string();
  };
  m.segments_file = resolve(m.segments_file);
  m.scheme.mapping_table = resolve(m.scheme.mapping_table);
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  manifest.validate();
  json j;
  j["name"] = manifest.name;
  j["sampling_rate"] = manifest.sampling_rate;
  j["channels"] = manifest.channels;
  j["segment_seconds"] = manifest.segment_seconds;
  const fs::path dir = fs::path(path).parent_path();
  auto relativize = [&](const std::string& p) {
    if (p.empty()) return p;
    std::error_code ec;
    const auto rel = fs::relative(p, dir, ec);
    return ec ? p : rel.string();
  };
  j["segments_file"] = relativize(manifest.segments_file);
  json s;
  if (manifest.scheme.type == LabelScheme::Type::Discrete) {
    s["type"] = "discrete";
    s["categories"] = manifest.scheme.categories;
    if (!manifest.scheme.mapping_table.empty())
      s["mapping_table"] = relativize(manifest.scheme.mapping_table);
  } else {
    s["type"] = "continuous";
    s["valence_range"] = {manifest.scheme.valence_min, manifest.scheme.valence_max};
    s["arousal_range"] = {manifest.scheme.arousal_min, manifest.scheme.arousal_max};
  }
  j["label_scheme"] = s;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
}

void write_segment_file(const std::string& path, const DatasetManifest& manifest,
                        const std::vector<EegSegment>& segments) {
  manifest.validate();
  const Eigen::Index n_samples = expected_samples(manifest);
  const auto n_channels = static_cast<Eigen::Index>(manifest.channels.size());
  std::unordered_map<std::string, std::uint16_t> category_ids;
  for (std::size_t i = 0; i < manifest.scheme.categories.size(); ++i)
    category_ids[manifest.scheme.categories[i]] = static_cast<std::uint16_t>(i);

  ByteWriter w(path);
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(segments.size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(n_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(n_samples));
  w.put<float>(static_cast<float>(manifest.sampling_rate));

  for (std::size_t si = 0; si < segments.size(); ++si) {
    const auto& seg = segments[si];
    if (seg.data.rows() != n_channels || seg.data.cols() != n_samples)
      throw ConfigError("segment " + std::to_string(si) + " shape does not match manifest '" +
                        manifest.name + "'");
    w.put<std::uint32_t>(seg.subject_id);
    if (const auto* d = std::get_if<DiscreteLabel>(&seg.label)) {
      if (manifest.scheme.type != LabelScheme::Type::Discrete)
        throw ConfigError("segment " + std::to_string(si) +
                          " has a discrete label but the manifest scheme is continuous");
      auto it = category_ids.find(d->category);
      if (it == category_ids.end())
        throw ConfigError("segment " + std::to_string(si) + ": category '" + d->category +
                          "' missing from the manifest");
      w.put<std::uint8_t>(0);
      w.put<std::uint16_t>(it->second);
    } else {
      if (manifest.scheme.type != LabelScheme::Type::Continuous)
        throw ConfigError("segment " + std::to_string(si) +
                          " has a continuous label but the manifest scheme is discrete");
      const auto& c = std::get<ContinuousLabel>(seg.label);
      w.put<std::uint8_t>(1);
      w.put<float>(static_cast<float>(c.valence));
      w.put<float>(static_cast<float>(c.arousal));
    }
    // channel-major rows are contiguous in a row-major copy
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = seg.data;
    w.put_bytes(rm.data(), sizeof(float) * static_cast<std::size_t>(rm.size()));
  }
  w.close();
}

std::vector<EegSegment> read_segment_file(const std::string& path,
                                          const DatasetManifest& manifest) {
  return parse_segment_file(slurp(path), path, manifest);
}

std::vector<EegSegment> parse_segment_file(std::vector<std::uint8_t> bytes,
                                           const std::string& origin,
                                           const DatasetManifest& manifest) {
  manifest.validate();
  const std::string& path = origin;
  ByteReader r(std::move(bytes), path);
  char magic[8];
  r.get_bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path + ": bad magic, not a segment file");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion)
    throw DataError(path + ": unsupported version " + std::to_string(version));
  const auto n_segments = r.get<std::uint32_t>("segment count");
  const auto n_channels = r.get<std::uint32_t>("channel count");
  const auto n_samples = r.get<std::uint32_t>("sample count");
  const auto rate = r.get<float>("sampling rate");

  if (n_channels != manifest.channels.size())
    throw DataError(path + ": channel count " + std::to_string(n_channels) +
                    " does not match manifest (" + std::to_string(manifest.channels.size()) + ")");
  if (static_cast<Eigen::Index>(n_samples) != expected_samples(manifest))
    throw DataError(path + ": sample count does not match manifest segment length");
  if (std::abs(static_cast<double>(rate) - manifest.sampling_rate) > 1e-3)
    throw DataError(path + ": sampling rate does not match manifest");
  if (n_channels == 0 || n_samples == 0) throw DataError(path + ": empty geometry");

  const std::size_t payload = sizeof(float) * n_channels * n_samples;
  std::vector<EegSegment> out;
  out.reserve(n_segments);
  std::vector<float> buf(static_cast<std::size_t>(n_channels) * n_samples);
  for (std::uint32_t si = 0; si < n_segments; ++si) {
    const std::string at = "segment " + std::to_string(si);
    EegSegment seg;
    seg.subject_id = r.get<std::uint32_t>(at + " subject");
    const auto tag = r.get<std::uint8_t>(at + " label tag");
    if (tag == 0) {
      if (manifest.scheme.type != LabelScheme::Type::Discrete)
        throw DataError(path + ": " + at +
                        " carries a discrete label but the manifest scheme is continuous");
      const auto cat = r.get<std::uint16_t>(at + " category id");
      if (cat >= manifest.scheme.categories.size())
        throw DataError(path + ": " + at + " category id " + std::to_string(cat) +
                        " out of range");
      seg.label = DiscreteLabel{manifest.scheme.categories[cat], manifest.name};
    } else if (tag == 1) {
      if (manifest.scheme.type != LabelScheme::Type::Continuous)
        throw DataError(path + ": " + at +
                        " carries a continuous label but the manifest scheme is discrete");
      ContinuousLabel c;
      c.valence = r.get<float>(at + " valence");
      c.arousal = r.get<float>(at + " arousal");
      c.valence_min = manifest.scheme.valence_min;
      c.valence_max = manifest.scheme.valence_max;
      c.arousal_min = manifest.scheme.arousal_min;
      c.arousal_max = manifest.scheme.arousal_max;
      if (!std::isfinite(c.valence) || !std::isfinite(c.arousal))
        throw DataError(path + ": " + at + " has a non-finite label");
      seg.label = c;
    } else {
      throw DataError(path + ": " + at + " has unknown label tag " + std::to_string(tag));
    }
    r.get_bytes(buf.data(), payload, at + " payload");
    seg.data.resize(n_channels, n_samples);
    for (std::uint32_t c = 0; c < n_channels; ++c)
      for (std::uint32_t t = 0; t < n_samples; ++t) {
        const float v = buf[static_cast<std::size_t>(c) * n_samples + t];
        if (!std::isfinite(v))
          throw DataError(path + ": " + at + " contains a non-finite sample");
        seg.data(c, t) = v;
      }
    seg.sampling_rate = manifest.sampling_rate;
    out.push_back(std::move(seg));
  }
  if (r.remaining() != 0)
    throw DataError(path + ": " + std::to_string(r.remaining()) +
                    " trailing bytes beyond the declared segment count");
  return out;
}

Dataset make_dataset(DatasetManifest manifest, std::vector<EegSegment> segments,
                     const DiscreteMappingTable& table) {
  Dataset ds;
  ds.manifest = std::move(manifest);
  ds.segments = std::move(segments);
  ds.va.reserve(ds.segments.size());
  for (const auto& seg : ds.segments) ds.va.push_back(to_va(seg.label, table, &ds.clamp_warnings));
  return ds;
}

Dataset load_dataset(const std::string& manifest_path) {
  DatasetManifest manifest = load_manifest(manifest_path);
  auto segments = read_segment_file(manifest.segments_file, manifest);
  DiscreteMappingTable table = manifest.scheme.mapping_table.empty()
                                   ? DiscreteMappingTable::bundled_default()
                                   : DiscreteMappingTable::load(manifest.scheme.mapping_table);
  return make_dataset(std::move(manifest), std::move(segments), table);
}

// ---------------------------------------------------------------------------
// synthetic generator
// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (!(snr > 0)) throw ConfigError("synthetic spec: snr must be > 0");
  if (channels < 2) throw ConfigError("synthetic spec: channels must be >= 2");
  if (n_segments < 1) throw ConfigError("synthetic spec: n_segments must be >= 1");
  if (n_subjects < 1) throw ConfigError("synthetic spec: n_subjects must be >= 1");
  if (!(sampling_rate > 0)) throw ConfigError("synthetic spec: sampling_rate must be > 0");
  if (!(segment_seconds > 0)) throw ConfigError("synthetic spec: segment_seconds must be > 0");
  const double exact = segment_seconds * sampling_rate;
  if (std::abs(exact - std::llround(exact)) > 1e-6 || exact < 32)
    throw ConfigError("synthetic spec: segment_seconds * sampling_rate must be an integer >= 32");
}

namespace {

// Pink background: white Gaussian noise shaped by 1/sqrt(f) in the frequency
// domain, DC removed, unit-variance output.
Eigen::VectorXd pink_noise(Eigen::Index n, double fs, Rng& rng) {
  Eigen::VectorXd white(n);
  for (Eigen::Index i = 0; i < n; ++i) white[i] = rng.normal();
  auto spec = fft::forward(white);
  spec[0] = 0.0;
  for (Eigen::Index k = 1; k < n; ++k) {
    const Eigen::Index sym = std::min<Eigen::Index>(k, n - k);
    const double f = static_cast<double>(sym) * fs / static_cast<double>(n);
    spec[static_cast<std::size_t>(k)] /= std::sqrt(f);
  }
  fft::transform(spec, true);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = spec[static_cast<std::size_t>(i)].real();
  const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  return out / rms;
}

}  // namespace

SynthResult generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SynthResult result;

  const auto n_samples = static_cast<Eigen::Index>(
      std::llround(spec.segment_seconds * spec.sampling_rate));
  const int c = spec.channels;

  DatasetManifest& m = result.manifest;
  m.name = spec.name;
  m.sampling_rate = spec.sampling_rate;
  m.segment_seconds = spec.segment_seconds;
  for (int i = 0; i < c; ++i) m.channels.push_back(spec.channel_prefix + std::to_string(i));
  m.segments_file = "data.seg";
  if (spec.label_mode == SyntheticSpec::LabelMode::Continuous) {
    m.scheme.type = LabelScheme::Type::Continuous;
    m.scheme.valence_min = 1.0;
    m.scheme.valence_max = 9.0;
    m.scheme.arousal_min = 1.0;
    m.scheme.arousal_max = 9.0;
  } else {
    m.scheme.type = LabelScheme::Type::Discrete;
    for (int mc = 0; mc < 3; ++mc)
      for (int mr = 0; mr < 3; ++mr) {
        const int k = mc * 3 + mr;
        m.scheme.categories.push_back("region_" + std::to_string(k));
        result.table.set("region_" + std::to_string(k),
                         {static_cast<double>(3 * (mc - 1)), static_cast<double>(3 * (mr - 1))},
                         "synthetic macro-region center");
      }
  }

  Rng master(spec.seed);
  Rng gain_rng = master.fork(1);
  Rng jitter_rng = master.fork(2);
  Rng label_rng = master.fork(3);

  Eigen::VectorXd gain_v(c), gain_a(c);
  for (int i = 0; i < c; ++i) {
    gain_v[i] = gain_rng.uniform(0.6, 1.4);
    gain_a[i] = gain_rng.uniform(0.6, 1.4);
  }
  Eigen::MatrixXd jitter(spec.n_subjects, c);
  for (int s = 0; s < spec.n_subjects; ++s)
    for (int i = 0; i < c; ++i) jitter(s, i) = jitter_rng.uniform(0.9, 1.1);

  for (int si = 0; si < spec.n_segments; ++si) {
    const std::uint32_t subject = static_cast<std::uint32_t>(si % spec.n_subjects);
    double v, a;
    if (spec.label_mode == SyntheticSpec::LabelMode::Continuous) {
      v = label_rng.uniform(-4.0, 4.0);
      a = label_rng.uniform(-4.0, 4.0);
    } else {
      const int k = static_cast<int>(label_rng.uniform_index(9));
      v = 3.0 * (k / 3 - 1);
      a = 3.0 * (k % 3 - 1);
    }
    const double amp_v = 0.5 + (v + 4.0) / 8.0;
    const double amp_a = 0.5 + (a + 4.0) / 8.0;

    Rng seg_rng = master.fork(1000 + static_cast<std::uint64_t>(si));
    Eigen::MatrixXd planted(c, n_samples);
    for (int ch = 0; ch < c; ++ch) {
      const double phase_v = seg_rng.uniform(0.0, 2.0 * kPi);
      const double phase_a = seg_rng.uniform(0.0, 2.0 * kPi);
      const double gv = gain_v[ch] * jitter(subject, ch);
      const double ga = gain_a[ch] * jitter(subject, ch);
      for (Eigen::Index t = 0; t < n_samples; ++t) {
        const double tt = static_cast<double>(t) / spec.sampling_rate;
        planted(ch, t) = gv * amp_v * std::sin(2.0 * kPi * 10.0 * tt + phase_v) +
                         ga * amp_a * std::sin(2.0 * kPi * 25.0 * tt + phase_a);
      }
    }
    Eigen::MatrixXd noise(c, n_samples);
    for (int ch = 0; ch < c; ++ch)
      noise.row(ch) = pink_noise(n_samples, spec.sampling_rate, seg_rng).transpose();

    const double p_sig = planted.squaredNorm();
    const double p_noise = noise.squaredNorm();
    const double noise_scale = std::sqrt(p_sig / (spec.snr * p_noise));

    EegSegment seg;
    seg.data = (planted + noise_scale * noise).cast<float>();
    seg.sampling_rate = spec.sampling_rate;
    seg.subject_id = subject;
    if (spec.label_mode == SyntheticSpec::LabelMode::Continuous) {
      ContinuousLabel lab;
      lab.valence = v + 5.0;  // raw [1,9] scale
      lab.arousal = a + 5.0;
      lab.valence_min = 1.0;
      lab.valence_max = 9.0;
      lab.arousal_min = 1.0;
      lab.arousal_max = 9.0;
      seg.label = lab;
    } else {
      const int mc = static_cast<int>(v / 3.0) + 1;
      const int mr = static_cast<int>(a / 3.0) + 1;
      seg.label = DiscreteLabel{"region_" + std::to_string(mc * 3 + mr), spec.name};
    }
    result.segments.push_back(std::move(seg));
    result.truth.push_back(SynthTruth{v, a, amp_v, amp_a, subject});
  }
  return result;
}

std::string write_synthetic(const SynthResult& result, const std::string& out_dir) {
  fs::create_directories(out_dir);
  DatasetManifest manifest = result.manifest;
  manifest.segments_file = (fs::path(out_dir) / "data.seg").string();
  if (manifest.scheme.type == LabelScheme::Type::Discrete) {
    manifest.scheme.mapping_table = (fs::path(out_dir) / "va_mapping.json").string();
    result.table.save(manifest.scheme.mapping_table);
  }
  write_segment_file(manifest.segments_file, manifest, result.segments);
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  save_manifest(manifest, manifest_path);
  return manifest_path;
}

SyntheticSpec synthetic_spec_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("synth spec: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("synth spec: invalid JSON: " + std::string(e.what()));
  }
  SyntheticSpec spec;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "name") spec.name = value.get<std::string>();
      else if (key == "n_subjects") spec.n_subjects = value.get<int>();
      else if (key == "n_segments") spec.n_segments = value.get<int>();
      else if (key == "channels") spec.channels = value.get<int>();
      else if (key == "sampling_rate") spec.sampling_rate = value.get<double>();
      else if (key == "segment_seconds") spec.segment_seconds = value.get<double>();
      else if (key == "snr") spec.snr = value.get<double>();
      else if (key == "seed") spec.seed = value.get<std::uint64_t>();
      else if (key == "channel_prefix") spec.channel_prefix = value.get<std::string>();
      else if (key == "label_mode") {
        const std::string mode = value.get<std::string>();
        if (mode == "continuous") spec.label_mode = SyntheticSpec::LabelMode::Continuous;
        else if (mode == "discrete-9") spec.label_mode = SyntheticSpec::LabelMode::Discrete9;
        else throw ConfigError("synth spec: label_mode must be 'continuous' or 'discrete-9'");
      } else {
        throw ConfigError("synth spec: unknown field '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("synth spec: field '" + key + "': " + e.what());
    }
  }
  spec.validate();
  return spec;
}

}  // namespace emod
