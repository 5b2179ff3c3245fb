#pragma once

#include <cstdint>
#include <vector>

namespace pcaudio {

struct AudioClip {
  std::vector<double> samples;  // [-1, 1]
  std::uint32_t sample_rate = 0;
  int label = -1;

  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  bool empty() const { return samples.empty(); }
};

enum class Window { hann, rect };

struct MagnitudeSpectrogram {
  std::vector<double> mags;  // row-major [T x (n_fft/2+1)], raw one-sided |DFT|
  std::size_t n_fft = 0;
  std::size_t hop = 0;
  std::uint32_t sample_rate = 0;
  std::vector<double> frame_times;  // seconds, frame centers

  std::size_t num_frames() const { return frame_times.size(); }
  std::size_t num_bins() const { return n_fft / 2 + 1; }
  double at(std::size_t t, std::size_t j) const { return mags[t * num_bins() + j]; }
  const double* frame(std::size_t t) const { return mags.data() + t * num_bins(); }
};

struct BandSpec {
  double f_lo = 0;
  double f_hi = 0;
  double gain_db = 0;
};

// White noise confined to [f_lo, f_hi]: unit-magnitude random-phase bins
// inside the band, zeros outside, inverse transform, peak normalized.
AudioClip make_bandpass_noise(double f_lo, double f_hi, std::uint32_t sample_rate,
                              double duration, std::uint64_t seed);

// Multi-band variant; per-band gains in dB relative to the loudest band.
AudioClip make_multiband_noise(const std::vector<BandSpec>& bands, std::uint32_t sample_rate,
                               double duration, std::uint64_t seed);

// T = floor((len - n_fft)/hop) + 1 frames of one-sided DFT magnitudes.
MagnitudeSpectrogram stft(const AudioClip& clip, std::size_t n_fft, std::size_t hop,
                          Window window = Window::hann);

// Windowed-sinc (Kaiser, 32-tap half-width) rate conversion with the
// anti-alias cutoff at min(Nyquist_in, Nyquist_out).
AudioClip resample(const AudioClip& clip, std::uint32_t target_sr);

// Removes leading/trailing 20 ms blocks whose RMS is below
// peak + threshold_db (threshold_db < 0). Entirely silent input yields an
// empty clip; callers decide whether to skip it.
AudioClip trim_silence(const AudioClip& clip, double threshold_db = -60.0);

// One-sided magnitude spectrum of an already-windowed buffer.
std::vector<double> dft_magnitude(const std::vector<double>& windowed);

std::vector<double> window_coefficients(Window window, std::size_t n);

}  // namespace pcaudio
