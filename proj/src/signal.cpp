#include "pcaudio/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <string>

#include "pcaudio/rng.hpp"

namespace pcaudio {

namespace {

// FFTW plan creation is not thread-safe; execution with per-call buffers is.
std::mutex& fft_mutex() {
  static std::mutex m;
  return m;
}

struct FftBuffers {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
  std::size_t n = 0;

  explicit FftBuffers(std::size_t size) : n(size) {
    std::lock_guard<std::mutex> lock(fft_mutex());
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~FftBuffers() {
    std::lock_guard<std::mutex> lock(fft_mutex());
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftBuffers(const FftBuffers&) = delete;
  FftBuffers& operator=(const FftBuffers&) = delete;
};

double kaiser_i0(double x) {
  // Modified Bessel I0 by series; converges quickly for the betas used here.
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::fabs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

void validate_band(const BandSpec& band, std::uint32_t sample_rate) {
  const double nyquist = sample_rate / 2.0;
  if (!(band.f_lo >= 0 && band.f_lo < band.f_hi && band.f_hi <= nyquist)) {
    throw std::invalid_argument("make_bandpass_noise: band [" + std::to_string(band.f_lo) +
                                ", " + std::to_string(band.f_hi) +
                                "] Hz is empty, inverted, or exceeds Nyquist " +
                                std::to_string(nyquist));
  }
}

}  // namespace

std::vector<double> window_coefficients(Window window, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (window == Window::hann) {
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::vector<double> dft_magnitude(const std::vector<double>& windowed) {
  const std::size_t n = windowed.size();
  if (n == 0) throw std::invalid_argument("dft_magnitude: empty input");
  FftBuffers fft(n);
  std::copy(windowed.begin(), windowed.end(), fft.in);
  fftw_execute(fft.plan);
  std::vector<double> mags(n / 2 + 1);
  for (std::size_t j = 0; j < mags.size(); ++j)
    mags[j] = std::hypot(fft.out[j][0], fft.out[j][1]);
  return mags;
}

AudioClip make_multiband_noise(const std::vector<BandSpec>& bands, std::uint32_t sample_rate,
                               double duration, std::uint64_t seed) {
  if (bands.empty()) throw std::invalid_argument("make_multiband_noise: no bands given");
  if (duration <= 0) throw std::invalid_argument("make_multiband_noise: duration must be > 0");
  for (const BandSpec& b : bands) validate_band(b, sample_rate);

  const std::size_t n = static_cast<std::size_t>(std::llround(duration * sample_rate));
  const std::size_t n_bins = n / 2 + 1;

  fftw_complex* spec;
  double* out;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fft_mutex());
    spec = fftw_alloc_complex(n_bins);
    out = fftw_alloc_real(n);
    plan = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, out, FFTW_ESTIMATE);
  }
  for (std::size_t j = 0; j < n_bins; ++j) spec[j][0] = spec[j][1] = 0.0;

  Rng rng(seed);
  for (const BandSpec& band : bands) {
    const double amp = std::pow(10.0, band.gain_db / 20.0);
    const std::size_t lo =
        static_cast<std::size_t>(std::ceil(band.f_lo * n / sample_rate));
    const std::size_t hi = std::min(
        n / 2, static_cast<std::size_t>(std::floor(band.f_hi * n / sample_rate)));
    if (lo > hi) {
      throw std::invalid_argument("make_multiband_noise: band [" + std::to_string(band.f_lo) +
                                  ", " + std::to_string(band.f_hi) +
                                  "] Hz contains no DFT bin at this length");
    }
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j == 0 || (n % 2 == 0 && j == n / 2)) {
        spec[j][0] = amp;  // DC and Nyquist must be real
        spec[j][1] = 0.0;
      } else {
        const double phase = 2.0 * M_PI * rng.uniform();
        spec[j][0] = amp * std::cos(phase);
        spec[j][1] = amp * std::sin(phase);
      }
    }
  }

  fftw_execute(plan);
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(out, out + n);
  {
    std::lock_guard<std::mutex> lock(fft_mutex());
    fftw_destroy_plan(plan);
    fftw_free(spec);
    fftw_free(out);
  }

  double peak = 0;
  for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 0) {
    const double g = 0.97 / peak;
    for (double& s : clip.samples) s *= g;
  }
  return clip;
}

AudioClip make_bandpass_noise(double f_lo, double f_hi, std::uint32_t sample_rate,
                              double duration, std::uint64_t seed) {
  return make_multiband_noise({BandSpec{f_lo, f_hi, 0.0}}, sample_rate, duration, seed);
}

MagnitudeSpectrogram stft(const AudioClip& clip, std::size_t n_fft, std::size_t hop,
                          Window window) {
  if (hop < 1) throw std::invalid_argument("stft: hop must be >= 1");
  if (clip.samples.size() < n_fft) {
    throw std::invalid_argument("stft: clip of " + std::to_string(clip.samples.size()) +
                                " samples is shorter than one window of " +
                                std::to_string(n_fft));
  }
  const std::size_t n_frames = (clip.samples.size() - n_fft) / hop + 1;
  const std::size_t n_bins = n_fft / 2 + 1;
  const std::vector<double> w = window_coefficients(window, n_fft);

  MagnitudeSpectrogram spec;
  spec.n_fft = n_fft;
  spec.hop = hop;
  spec.sample_rate = clip.sample_rate;
  spec.mags.resize(n_frames * n_bins);
  spec.frame_times.resize(n_frames);

  FftBuffers fft(n_fft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * hop;
    for (std::size_t i = 0; i < n_fft; ++i) fft.in[i] = clip.samples[start + i] * w[i];
    fftw_execute(fft.plan);
    double* row = spec.mags.data() + t * n_bins;
    for (std::size_t j = 0; j < n_bins; ++j) row[j] = std::hypot(fft.out[j][0], fft.out[j][1]);
    spec.frame_times[t] =
        (static_cast<double>(start) + n_fft / 2.0) / static_cast<double>(clip.sample_rate);
  }
  return spec;
}

AudioClip resample(const AudioClip& clip, std::uint32_t target_sr) {
  if (target_sr == 0) throw std::invalid_argument("resample: target rate must be > 0");
  if (target_sr == clip.sample_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_sr == 0 ? clip.sample_rate : target_sr;
    return out;
  }

  const double ratio = static_cast<double>(target_sr) / clip.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // fraction of input Nyquist
  const double half_width = 32.0 / cutoff;     // input samples
  const double beta = 8.6;
  const double i0_beta = kaiser_i0(beta);
  const std::size_t in_len = clip.samples.size();
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(in_len) * ratio));

  AudioClip out;
  out.sample_rate = target_sr;
  out.samples.resize(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    const double x = static_cast<double>(j) / ratio;  // position in input samples
    const long first = std::max<long>(0, static_cast<long>(std::ceil(x - half_width)));
    const long last =
        std::min<long>(static_cast<long>(in_len) - 1, static_cast<long>(std::floor(x + half_width)));
    double acc = 0;
    for (long i = first; i <= last; ++i) {
      const double u = x - static_cast<double>(i);
      const double t = u * cutoff / 32.0;  // [-1, 1] across the kernel support
      const double k2 = 1.0 - t * t;
      if (k2 < 0) continue;
      const double win = kaiser_i0(beta * std::sqrt(k2)) / i0_beta;
      acc += clip.samples[static_cast<std::size_t>(i)] * cutoff * sinc(cutoff * u) * win;
    }
    out.samples[j] = acc;
  }
  out.label = clip.label;
  return out;
}

AudioClip trim_silence(const AudioClip& clip, double threshold_db) {
  if (threshold_db >= 0) {
    throw std::invalid_argument("trim_silence: threshold must be negative dB relative to peak");
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.label = clip.label;
  if (clip.samples.empty()) return out;

  double peak = 0;
  for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
  if (peak <= 0) return out;  // entirely silent

  const std::size_t block = std::max<std::size_t>(1, clip.sample_rate / 50);  // 20 ms
  const std::size_t n_blocks = (clip.samples.size() + block - 1) / block;
  const double floor_db = 20.0 * std::log10(peak) + threshold_db;

  auto block_db = [&](std::size_t b) {
    const std::size_t start = b * block;
    const std::size_t end = std::min(clip.samples.size(), start + block);
    double acc = 0;
    for (std::size_t i = start; i < end; ++i) acc += clip.samples[i] * clip.samples[i];
    const double rms = std::sqrt(acc / static_cast<double>(end - start));
    return 20.0 * std::log10(rms + 1e-12);
  };

  std::size_t first = n_blocks, last = 0;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    if (block_db(b) >= floor_db) {
      first = std::min(first, b);
      last = b;
    }
  }
  if (first == n_blocks) return out;  // nothing above threshold

  const std::size_t begin = first * block;
  const std::size_t end = std::min(clip.samples.size(), (last + 1) * block);
  out.samples.assign(clip.samples.begin() + static_cast<long>(begin),
                     clip.samples.begin() + static_cast<long>(end));
  return out;
}

}  // namespace pcaudio
