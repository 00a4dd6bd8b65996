// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "emod/fft.hpp"
#include "emod/rng.hpp"
#include "emod/signal.hpp"

using namespace emod;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

RawRecording sinusoid(double freq, double fs, double seconds, int channels = 1) {
  RawRecording r;
  r.sampling_rate = fs;
  const Eigen::Index n = static_cast<Eigen::Index>(seconds * fs);
  r.samples.resize(channels, n);
  for (int c = 0; c < channels; ++c) {
    r.channels.push_back("CH" + std::to_string(c));
    for (Eigen::Index i = 0; i < n; ++i)
      r.samples(c, i) = std::sin(2.0 * kPi * freq * static_cast<double>(i) / fs);
  }
  return r;
}

double rms(const Eigen::VectorXd& x) { return std::sqrt(x.squaredNorm() / x.size()); }

}  // namespace

TEST_CASE("bandpass passes 10 Hz and rejects 60 Hz") {
  auto in10 = sinusoid(10.0, 200.0, 6.0);
  auto out10 = bandpass(in10);
  CHECK(out10.edge_settle_samples == 200);
  const Eigen::Index skip = 200;
  const Eigen::Index keep = in10.samples.cols() - 2 * skip;
  const double r_in = rms(in10.samples.row(0).segment(skip, keep).transpose());
  const double r_out = rms(out10.samples.row(0).segment(skip, keep).transpose());
  CHECK(std::abs(r_out - r_in) / r_in < 0.05);

  auto in60 = sinusoid(60.0, 200.0, 6.0);
  auto out60 = bandpass(in60);
  const double r60_in = rms(in60.samples.row(0).segment(skip, keep).transpose());
  const double r60_out = rms(out60.samples.row(0).segment(skip, keep).transpose());
  CHECK(r60_out / r60_in < 0.10);
}

TEST_CASE("bandpass of zero input is zero and bad bands are rejected") {
  RawRecording z;
  z.sampling_rate = 200.0;
  z.channels = {"A"};
  z.samples = Eigen::MatrixXd::Zero(1, 1000);
  auto out = bandpass(z);
  CHECK(out.samples.cwiseAbs().maxCoeff() < 1e-12);

  auto x = sinusoid(5.0, 200.0, 2.0);
  CHECK_THROWS_AS(bandpass(x, 49.0, 0.3), ConfigError);
  CHECK_THROWS_AS(bandpass(x, 0.3, 120.0), ConfigError);
}

TEST_CASE("bandpass is zero phase for an in-band tone") {
  auto in = sinusoid(8.0, 200.0, 6.0);
  auto out = bandpass(in);
  const Eigen::Index skip = 200;
  const Eigen::Index keep = in.samples.cols() - 2 * skip;
  Eigen::VectorXd a = in.samples.row(0).segment(skip, keep).transpose();
  Eigen::VectorXd b = out.samples.row(0).segment(skip, keep).transpose();
  // cross-correlation peak over lags [-10, 10] must sit at lag 0
  int best_lag = -99;
  double best = -1e300;
  for (int lag = -10; lag <= 10; ++lag) {
    double acc = 0.0;
    for (Eigen::Index i = 10; i < keep - 10; ++i) acc += a[i] * b[i + lag];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("average rereference zeroes the cross-channel mean") {
  RawRecording r;
  r.sampling_rate = 100.0;
  r.channels = {"A", "B"};
  r.samples.resize(2, 3);
  r.samples << 1, 2, 3, 3, 4, 5;
  auto out = average_rereference(r);
  CHECK(out.samples(0, 0) == doctest::Approx(-1.0));
  CHECK(out.samples(1, 0) == doctest::Approx(1.0));

  Rng rng(5);
  RawRecording big;
  big.sampling_rate = 100.0;
  big.samples.resize(7, 400);
  for (Eigen::Index i = 0; i < big.samples.size(); ++i) big.samples.data()[i] = rng.normal();
  for (int c = 0; c < 7; ++c) big.channels.push_back("C" + std::to_string(c));
  auto ref = average_rereference(big);
  CHECK(ref.samples.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);

  // idempotent and linear
  auto twice = average_rereference(ref);
  CHECK((twice.samples - ref.samples).cwiseAbs().maxCoeff() < 1e-12);

  RawRecording one;
  one.sampling_rate = 100.0;
  one.channels = {"A"};
  one.samples = Eigen::MatrixXd::Zero(1, 10);
  CHECK_THROWS_AS(average_rereference(one), ConfigError);
}

TEST_CASE("resample length arithmetic and identity") {
  auto x = sinusoid(5.0, 256.0, 2.0);
  auto same = resample(x, 256.0);
  CHECK((same.samples - x.samples).cwiseAbs().maxCoeff() == 0.0);

  auto half = resample(x, 128.0);
  CHECK(half.samples.cols() == x.samples.cols() / 2);
  CHECK(half.sampling_rate == doctest::Approx(128.0));
}

TEST_CASE("resample preserves tone frequency within one bin") {
  auto x = sinusoid(5.0, 256.0, 2.0);
  auto y = resample(x, 200.0);
  CHECK(y.samples.cols() == 400);
  auto mag = window_fft_magnitude(y.samples.row(0).transpose());
  Eigen::Index peak = 0;
  mag.segment(1, mag.size() - 1).maxCoeff(&peak);
  peak += 1;
  const double bin_hz = 200.0 / static_cast<double>(y.samples.cols());
  const double peak_hz = static_cast<double>(peak) * bin_hz;
  CHECK(std::abs(peak_hz - 5.0) <= bin_hz + 1e-9);
}

TEST_CASE("segmentation keeps exact slices and discards the remainder") {
  Rng rng(17);
  RawRecording r;
  r.sampling_rate = 100.0;
  r.channels = {"A", "B"};
  r.samples.resize(2, 3500);
  for (Eigen::Index i = 0; i < r.samples.size(); ++i) r.samples.data()[i] = rng.normal();

  auto segs = segment(r, 10.0);
  CHECK(segs.size() == 3);
  for (const auto& s : segs) CHECK(s.data.cols() == 1000);

  // concatenation reproduces the prefix bit-exactly (after the float cast)
  for (std::size_t k = 0; k < segs.size(); ++k) {
    Eigen::MatrixXf expect = r.samples.middleCols(k * 1000, 1000).cast<float>();
    CHECK((segs[k].data.array() == expect.array()).all());
  }

  RawRecording exact = r;
  exact.samples = r.samples.leftCols(1000);
  CHECK(segment(exact, 10.0).size() == 1);

  RawRecording shorter = r;
  shorter.samples = r.samples.leftCols(990);
  CHECK(segment(shorter, 10.0).empty());
}

TEST_CASE("fft magnitude of dc and integer-bin sinusoids") {
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
  auto mag = window_fft_magnitude(ones);
  CHECK(mag.size() == 5);
  CHECK(mag[0] == doctest::Approx(8.0));
  for (Eigen::Index k = 1; k < mag.size(); ++k) CHECK(mag[k] < 1e-12);

  const int p = 64, kbin = 7;
  Eigen::VectorXd s(p);
  for (int i = 0; i < p; ++i) s[i] = std::sin(2.0 * kPi * kbin * i / p);
  auto ms = window_fft_magnitude(s);
  CHECK(ms[kbin] == doctest::Approx(32.0));
  for (Eigen::Index k = 0; k < ms.size(); ++k)
    if (k != kbin) CHECK(ms[k] < 1e-9);
}

TEST_CASE("fft satisfies Parseval on random inputs, any length") {
  Rng rng(23);
  for (int len : {64, 100, 37, 128, 250}) {
    Eigen::VectorXd x(len);
    for (int i = 0; i < len; ++i) x[i] = rng.normal();
    auto spec = fft::forward(x);
    double lhs = x.squaredNorm();
    double rhs = 0.0;
    for (const auto& c : spec) rhs += std::norm(c);
    rhs /= static_cast<double>(len);
    CHECK(std::abs(lhs - rhs) / lhs < 1e-10);

    if (len % 2 == 0) {
      // magnitude-spectrum form of the identity for even lengths
      auto mag = window_fft_magnitude(x);
      double acc = mag[0] * mag[0] + mag[len / 2] * mag[len / 2];
      for (Eigen::Index k = 1; k < len / 2; ++k) acc += 2.0 * mag[k] * mag[k];
      acc /= static_cast<double>(len);
      CHECK(std::abs(lhs - acc) / lhs < 1e-10);
    }
  }
}

TEST_CASE("fft round-trip through the inverse transform") {
  Rng rng(29);
  for (int len : {16, 48, 81}) {
    std::vector<fft::Complex> a(len);
    for (auto& v : a) v = fft::Complex(rng.normal(), rng.normal());
    auto b = a;
    fft::transform(b, false);
    fft::transform(b, true);
    for (int i = 0; i < len; ++i) CHECK(std::abs(b[i] - a[i]) < 1e-10);
  }
}
