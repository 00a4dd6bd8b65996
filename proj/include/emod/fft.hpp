// SPDX-License-Identifier: Apache-2.0
//
// Complex FFT in double precision: iterative radix-2 for power-of-two lengths
// with a Bluestein chirp-z fallback, so any window size works.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace emod::fft {

using Complex = std::complex<double>;

// In-place transform of arbitrary length. Forward uses exp(-2*pi*i*kn/N); the
// inverse includes the 1/N factor so that inverse(forward(x)) == x.
void transform(std::vector<Complex>& a, bool inverse);

std::vector<Complex> forward(const Eigen::Ref<const Eigen::VectorXd>& x);

// Magnitudes of the first floor(p/2)+1 bins of the unnormalized DFT.
Eigen::VectorXd magnitude_spectrum(const Eigen::Ref<const Eigen::VectorXd>& x);

}  // namespace emod::fft
