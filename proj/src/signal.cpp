// SPDX-License-Identifier: Apache-2.0
#include "emod/signal.hpp"

#include <cmath>
#include <complex>

#include "emod/fft.hpp"

namespace emod {

namespace detail {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

std::complex<double> bilinear(std::complex<double> s, double fs) {
  return (2.0 * fs + s) / (2.0 * fs - s);
}

std::complex<double> section_response(const Biquad& q, std::complex<double> zinv) {
  const auto zinv2 = zinv * zinv;
  return (q.b0 + q.b1 * zinv + q.b2 * zinv2) / (1.0 + q.a1 * zinv + q.a2 * zinv2);
}
}  // namespace

std::vector<Biquad> butter_bandpass_sections(int order, double low_hz, double high_hz, double fs) {
  if (order < 2 || order % 2 != 0) throw ConfigError("butter_bandpass: order must be even and >= 2");
  if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < fs / 2.0))
    throw ConfigError("butter_bandpass: need 0 < low < high < fs/2, got [" +
                      std::to_string(low_hz) + "," + std::to_string(high_hz) + ") at fs " +
                      std::to_string(fs));
  const double wl = 2.0 * fs * std::tan(kPi * low_hz / fs);
  const double wh = 2.0 * fs * std::tan(kPi * high_hz / fs);
  const double w0sq = wl * wh;
  const double bw = wh - wl;

  std::vector<Biquad> sections;
  for (int k = 0; k < order / 2; ++k) {
    // Upper-half-plane prototype pole of the low-pass Butterworth.
    const double theta = kPi / 2.0 + kPi * (2.0 * k + 1.0) / (2.0 * order);
    const std::complex<double> p(std::cos(theta), std::sin(theta));
    // Low-pass -> band-pass: each prototype pole yields two poles via
    // s^2 - bw*p*s + w0^2 = 0.
    const std::complex<double> bp = bw * p;
    const std::complex<double> disc = std::sqrt(bp * bp - 4.0 * w0sq);
    for (const auto& s : {(bp + disc) / 2.0, (bp - disc) / 2.0}) {
      const auto z = bilinear(s, fs);
      sections.push_back(Biquad{1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    }
  }
  // Normalize to unit gain at the geometric band center.
  const double wc = 2.0 * kPi * std::sqrt(low_hz * high_hz) / fs;
  const std::complex<double> zinv(std::cos(-wc), std::sin(-wc));
  std::complex<double> h(1.0, 0.0);
  for (const auto& q : sections) h *= section_response(q, zinv);
  const double per_section = std::pow(1.0 / std::abs(h), 1.0 / static_cast<double>(sections.size()));
  for (auto& q : sections) {
    q.b0 *= per_section;
    q.b1 *= per_section;
    q.b2 *= per_section;
  }
  return sections;
}

namespace {

void filter_inplace(const std::vector<Biquad>& sections, Eigen::VectorXd& x) {
  for (const auto& q : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double in = x[i];
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      x[i] = out;
    }
  }
}

}  // namespace

Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x, int pad) {
  const Eigen::Index n = x.size();
  const Eigen::Index p = std::min<Eigen::Index>(pad, n - 1);
  Eigen::VectorXd ext(n + 2 * p);
  for (Eigen::Index i = 0; i < p; ++i) ext[i] = 2.0 * x[0] - x[p - i];
  ext.segment(p, n) = x;
  for (Eigen::Index i = 0; i < p; ++i) ext[p + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  filter_inplace(sections, ext);
  ext.reverseInPlace();
  filter_inplace(sections, ext);
  ext.reverseInPlace();
  return ext.segment(p, n);
}

}  // namespace detail

RawRecording bandpass(const RawRecording& x, double low_hz, double high_hz) {
  if (x.samples.cols() < 2) throw ConfigError("bandpass: recording too short");
  const auto sections = detail::butter_bandpass_sections(4, low_hz, high_hz, x.sampling_rate);
  const int settle = static_cast<int>(std::lround(x.sampling_rate));
  RawRecording out = x;
  out.edge_settle_samples = std::max(x.edge_settle_samples, settle);
  for (Eigen::Index c = 0; c < x.samples.rows(); ++c) {
    Eigen::VectorXd row = x.samples.row(c).transpose();
    out.samples.row(c) = detail::filtfilt(sections, row, settle).transpose();
  }
  return out;
}

RawRecording average_rereference(const RawRecording& x) {
  if (x.samples.rows() < 2) throw ConfigError("average_rereference: need at least 2 channels");
  RawRecording out = x;
  const Eigen::RowVectorXd col_mean = x.samples.colwise().mean();
  out.samples = x.samples.rowwise() - col_mean;
  return out;
}

RawRecording resample(const RawRecording& x, double target_hz) {
  if (!(target_hz > 0.0)) throw ConfigError("resample: target rate must be positive");
  if (target_hz == x.sampling_rate) return x;
  const Eigen::Index n = x.samples.cols();
  const Eigen::Index m =
      static_cast<Eigen::Index>(std::floor(static_cast<double>(n) * target_hz / x.sampling_rate + 1e-9));
  if (m < 2) throw ConfigError("resample: output would be shorter than 2 samples");
  RawRecording out = x;
  out.sampling_rate = target_hz;
  out.samples.resize(x.samples.rows(), m);
  const double scale = static_cast<double>(m) / static_cast<double>(n);
  for (Eigen::Index c = 0; c < x.samples.rows(); ++c) {
    auto spec = fft::forward(x.samples.row(c).transpose());
    std::vector<fft::Complex> y(static_cast<std::size_t>(m), fft::Complex(0, 0));
    const Eigen::Index keep = std::min(n, m);
    y[0] = spec[0];
    for (Eigen::Index k = 1; k < (keep + 1) / 2; ++k) {
      y[static_cast<std::size_t>(k)] = spec[static_cast<std::size_t>(k)];
      y[static_cast<std::size_t>(m - k)] = spec[static_cast<std::size_t>(n - k)];
    }
    if (keep % 2 == 0) {
      const Eigen::Index nyq = keep / 2;
      if (m < n) {
        // Downsampling: both input sidebands fold onto the shared bin; the
        // sum is real by conjugate symmetry.
        y[static_cast<std::size_t>(nyq)] =
            spec[static_cast<std::size_t>(nyq)] + spec[static_cast<std::size_t>(n - nyq)];
      } else if (m > n) {
        // Upsampling: split the input Nyquist bin across both new bins.
        y[static_cast<std::size_t>(nyq)] = 0.5 * spec[static_cast<std::size_t>(nyq)];
        y[static_cast<std::size_t>(m - nyq)] = 0.5 * spec[static_cast<std::size_t>(nyq)];
      } else {
        y[static_cast<std::size_t>(nyq)] = spec[static_cast<std::size_t>(nyq)];
      }
    }
    fft::transform(y, true);
    for (Eigen::Index i = 0; i < m; ++i)
      out.samples(c, i) = y[static_cast<std::size_t>(i)].real() * scale;
  }
  return out;
}

std::vector<EegSegment> segment(const RawRecording& x, double seconds, const EmotionLabel& label,
                                int dataset_id) {
  const double exact = seconds * x.sampling_rate;
  const Eigen::Index win = static_cast<Eigen::Index>(std::llround(exact));
  if (win < 1 || std::abs(exact - static_cast<double>(win)) > 1e-6)
    throw ConfigError("segment: seconds * sampling_rate must be a positive integer, got " +
                      std::to_string(exact));
  const Eigen::Index count = x.samples.cols() / win;
  std::vector<EegSegment> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    EegSegment s;
    s.data = x.samples.middleCols(i * win, win).cast<float>();
    s.sampling_rate = x.sampling_rate;
    s.dataset_id = dataset_id;
    s.subject_id = x.subject_id;
    s.label = label;
    out.push_back(std::move(s));
  }
  return out;
}

Eigen::VectorXd window_fft_magnitude(const Eigen::Ref<const Eigen::VectorXd>& x) {
  return fft::magnitude_spectrum(x);
}

}  // namespace emod
