// SPDX-License-Identifier: Apache-2.0
//
// Deterministic EEG preprocessing: zero-phase band-pass, average
// re-referencing, rational resampling, and non-overlapping segmentation.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "emod/errors.hpp"
#include "emod/va_space.hpp"

namespace emod {

struct RawRecording {
  std::vector<std::string> channels;
  double sampling_rate = 0.0;
  Eigen::MatrixXd samples;  // channels x time
  std::uint32_t subject_id = 0;
  // Samples within one filter settling time of either end are flagged here
  // (not removed) so downstream consumers can exclude them.
  int edge_settle_samples = 0;
};

// One model-ready window. data is float32 to match the on-disk payload.
struct EegSegment {
  Eigen::MatrixXf data;  // channels x time
  double sampling_rate = 0.0;
  int dataset_id = 0;
  std::uint32_t subject_id = 0;
  EmotionLabel label = ContinuousLabel{};
};

// Zero-phase band-pass: 4th-order Butterworth prototype mapped to a band-pass
// cascade, applied forward then backward with one second of odd-reflection
// padding. Defaults cover 0.3-49 Hz.
RawRecording bandpass(const RawRecording& x, double low_hz = 0.3, double high_hz = 49.0);

// Subtracts the cross-channel mean at every time index.
RawRecording average_rereference(const RawRecording& x);

// FFT-domain rational resampling; output length floor(N * target / source).
RawRecording resample(const RawRecording& x, double target_hz);

// floor(N / (seconds * rate)) non-overlapping windows; the trailing remainder
// is discarded. Every segment is stamped with the given label and ids.
std::vector<EegSegment> segment(const RawRecording& x, double seconds,
                                const EmotionLabel& label = ContinuousLabel{}, int dataset_id = 0);

// Magnitude of the real-input DFT, unnormalized, length floor(p/2)+1.
Eigen::VectorXd window_fft_magnitude(const Eigen::Ref<const Eigen::VectorXd>& x);

namespace detail {
struct Biquad {
  double b0, b1, b2, a1, a2;
};
std::vector<Biquad> butter_bandpass_sections(int order, double low_hz, double high_hz, double fs);
Eigen::VectorXd filtfilt(const std::vector<Biquad>& sections, const Eigen::VectorXd& x, int pad);
}  // namespace detail

}  // namespace emod
