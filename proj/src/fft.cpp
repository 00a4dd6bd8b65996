// SPDX-License-Identifier: Apache-2.0
#include "emod/fft.hpp"

#include <cmath>
#include <cstdint>

#include "emod/errors.hpp"

namespace emod::fft {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Iterative Cooley-Tukey, length must be a power of two.
void radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const Complex wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Chirp-z transform for arbitrary lengths, built on power-of-two convolution.
void bluestein(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<Complex> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t sq = (static_cast<std::uint64_t>(k) * k) % (2 * n);
    const double ang = sign * kPi * static_cast<double>(sq) / static_cast<double>(n);
    chirp[k] = Complex(std::cos(ang), std::sin(ang));
  }
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<Complex> f(m, Complex(0, 0)), g(m, Complex(0, 0));
  for (std::size_t k = 0; k < n; ++k) f[k] = a[k] * chirp[k];
  g[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) g[k] = g[m - k] = std::conj(chirp[k]);
  radix2(f, false);
  radix2(g, false);
  for (std::size_t k = 0; k < m; ++k) f[k] *= g[k];
  radix2(f, true);
  const double norm = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = f[k] * norm * chirp[k];
}

}  // namespace

void transform(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0) throw ConfigError("fft: empty input");
  if (n == 1) return;
  if (is_pow2(n)) {
    radix2(a, inverse);
  } else {
    bluestein(a, inverse);
  }
  if (inverse) {
    const double norm = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= norm;
  }
}

std::vector<Complex> forward(const Eigen::Ref<const Eigen::VectorXd>& x) {
  std::vector<Complex> a(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) a[static_cast<std::size_t>(i)] = Complex(x[i], 0.0);
  transform(a, false);
  return a;
}

Eigen::VectorXd magnitude_spectrum(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() < 2) throw ConfigError("magnitude_spectrum: need at least 2 samples");
  const auto a = forward(x);
  const Eigen::Index bins = x.size() / 2 + 1;
  Eigen::VectorXd mag(bins);
  for (Eigen::Index k = 0; k < bins; ++k) mag[k] = std::abs(a[static_cast<std::size_t>(k)]);
  return mag;
}

}  // namespace emod::fft
