#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "pcaudio/signal.hpp"
#include "pcaudio/wav.hpp"
#include "test_util.hpp"

using namespace pcaudio;

TEST_CASE("bandpass noise concentrates energy in the band") {
  AudioClip clip = make_bandpass_noise(2000, 4000, 16000, 0.25, 11);
  CHECK(clip.samples.size() == 4000);
  const double ratio = testutil::band_energy_ratio(clip.samples, 16000, 2000, 4000);
  CHECK(ratio >= 0.99);
}

TEST_CASE("bandpass noise rejects degenerate bands") {
  CHECK_THROWS_AS(make_bandpass_noise(1000, 1000, 16000, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_bandpass_noise(3000, 2000, 16000, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_bandpass_noise(1000, 9000, 16000, 0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_bandpass_noise(1000, 2000, 16000, 0.0, 0), std::invalid_argument);
}

TEST_CASE("disjoint bands have near-zero spectral overlap") {
  AudioClip a = make_bandpass_noise(500, 1500, 16000, 0.25, 1);
  AudioClip b = make_bandpass_noise(2500, 3500, 16000, 0.25, 2);
  const auto ma = testutil::naive_dft_magnitude(a.samples);
  const auto mb = testutil::naive_dft_magnitude(b.samples);
  double dot = 0, ea = 0, eb = 0;
  for (std::size_t k = 0; k < ma.size(); ++k) {
    dot += ma[k] * mb[k];
    ea += ma[k] * ma[k];
    eb += mb[k] * mb[k];
  }
  CHECK(dot / std::sqrt(ea * eb) < 1e-3);
}

TEST_CASE("bandpass noise out-of-band energy below 1% across bands") {
  const double bands[][2] = {{100, 600}, {1000, 2000}, {3000, 7000}, {200, 7900}};
  for (const auto& band : bands) {
    AudioClip clip = make_bandpass_noise(band[0], band[1], 16000, 0.2, 77);
    CHECK(testutil::band_energy_ratio(clip.samples, 16000, band[0], band[1]) > 0.99);
  }
}

TEST_CASE("multiband noise respects per-band gains") {
  std::vector<BandSpec> bands = {{500, 1500, 0.0}, {3000, 4000, -30.0}};
  AudioClip clip = make_multiband_noise(bands, 16000, 0.25, 5);
  const double loud = testutil::band_energy_ratio(clip.samples, 16000, 500, 1500);
  const double quiet = testutil::band_energy_ratio(clip.samples, 16000, 3000, 4000);
  CHECK(loud > 0.9);
  CHECK(quiet > 0.0);
  CHECK(quiet < 0.01);
  CHECK(loud + quiet > 0.99);
}

TEST_CASE("stft of an integer-bin sine has a single nonzero bin") {
  const std::size_t n = 512;
  const std::size_t k = 37;
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(n);
  for (std::size_t t = 0; t < n; ++t)
    clip.samples[t] = std::sin(2.0 * M_PI * k * t / static_cast<double>(n));
  MagnitudeSpectrogram spec = stft(clip, n, n, Window::rect);
  REQUIRE(spec.num_frames() == 1);
  CHECK(spec.at(0, k) == doctest::Approx(n / 2.0));
  for (std::size_t j = 0; j < spec.num_bins(); ++j) {
    if (j != k) CHECK(spec.at(0, j) < 1e-8 * n);
  }
}

TEST_CASE("stft of silence is zero") {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(2048, 0.0);
  MagnitudeSpectrogram spec = stft(clip, 1024, 512);
  for (double m : spec.mags) CHECK(m == 0.0);
}

TEST_CASE("stft frame count formula") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(3072, 0.1);
  MagnitudeSpectrogram spec = stft(clip, 2048, 512);
  CHECK(spec.num_frames() == 3);
  CHECK(spec.num_bins() == 1025);
  // frame centers: (start + N/2) / sr
  CHECK(spec.frame_times[0] == doctest::Approx(1024.0 / 16000));
  CHECK(spec.frame_times[1] == doctest::Approx((512 + 1024.0) / 16000));
  CHECK(spec.frame_times[1] > spec.frame_times[0]);
}

TEST_CASE("stft rejects clips shorter than one window") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(100, 0.0);
  CHECK_THROWS_AS(stft(clip, 256, 128), std::invalid_argument);
}

TEST_CASE("stft satisfies Parseval for rect window") {
  AudioClip clip = make_bandpass_noise(200, 6000, 16000, 0.128, 9);
  const std::size_t n = 1024;
  MagnitudeSpectrogram spec = stft(clip, n, n, Window::rect);
  for (std::size_t t = 0; t < spec.num_frames(); ++t) {
    double frame_energy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = clip.samples[t * n + i];
      frame_energy += s * s;
    }
    double spectral = 0;
    for (std::size_t j = 0; j < spec.num_bins(); ++j) {
      const bool interior = j != 0 && j != n / 2;
      spectral += spec.at(t, j) * spec.at(t, j) * (interior ? 2.0 : 1.0);
    }
    CHECK(spectral == doctest::Approx(n * frame_energy).epsilon(1e-9));
  }
}

TEST_CASE("resample with equal rates is the identity") {
  AudioClip clip = make_bandpass_noise(500, 2000, 16000, 0.1, 3);
  AudioClip out = resample(clip, 16000);
  CHECK(out.samples == clip.samples);
  CHECK(out.sample_rate == 16000);
}

TEST_CASE("resample preserves DC") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(8000, 0.5);
  AudioClip out = resample(clip, 8000);
  REQUIRE(out.samples.size() == 4000);
  // interior samples (edges see kernel truncation)
  for (std::size_t i = 100; i + 100 < out.samples.size(); ++i) {
    CHECK(out.samples[i] == doctest::Approx(0.5).epsilon(1e-3));
  }
}

TEST_CASE("resample keeps a 440 Hz tone at 440 Hz") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(3200);
  for (std::size_t t = 0; t < clip.samples.size(); ++t)
    clip.samples[t] = std::sin(2.0 * M_PI * 440.0 * t / 16000.0);
  AudioClip down = resample(clip, 8000);
  REQUIRE(down.samples.size() == 1600);
  const double peak = testutil::peak_frequency(down.samples, 8000);
  const double bin = 8000.0 / down.samples.size();
  CHECK(std::fabs(peak - 440.0) <= bin + 1e-9);
}

TEST_CASE("resample round trip preserves the low band") {
  AudioClip x = make_bandpass_noise(100, 0.35 * 8000, 16000, 0.3, 17);
  AudioClip up = resample(x, 32000);
  AudioClip down = resample(up, 16000);
  REQUIRE(down.samples.size() == x.samples.size());
  double peak = 0;
  for (double s : x.samples) peak = std::max(peak, std::fabs(s));
  double worst = 0;
  for (std::size_t i = 128; i + 128 < x.samples.size(); ++i)
    worst = std::max(worst, std::fabs(down.samples[i] - x.samples[i]));
  CHECK(worst / peak < 0.01);  // -40 dB
}

TEST_CASE("trim_silence removes exact-zero padding") {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(8000, 0.0);  // 1 s of silence
  for (std::size_t t = 0; t < 4000; ++t)
    clip.samples.push_back(0.5 * std::sin(2.0 * M_PI * 440.0 * t / 8000.0));
  AudioClip out = trim_silence(clip, -60.0);
  CHECK(out.samples.size() == 4000);
  CHECK(out.samples[0] == clip.samples[8000]);
}

TEST_CASE("trim_silence leaves loud clips unchanged") {
  AudioClip clip = make_bandpass_noise(500, 2000, 8000, 0.5, 21);
  AudioClip out = trim_silence(clip, -60.0);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("trim_silence on constructed pads keeps the body within one hop") {
  const std::uint32_t sr = 8000;
  const std::size_t hop = sr / 50;
  AudioClip clip;
  clip.sample_rate = sr;
  const double pad_amp = std::pow(10.0, -80.0 / 20.0);
  const double body_amp = std::pow(10.0, -20.0 / 20.0);
  auto tone = [&](double amp, std::size_t len, std::size_t offset) {
    for (std::size_t t = 0; t < len; ++t)
      clip.samples.push_back(amp * std::sin(2.0 * M_PI * 700.0 * (t + offset) / sr));
  };
  tone(pad_amp, 4000, 0);
  tone(body_amp, 6000, 4000);
  tone(pad_amp, 4000, 10000);
  AudioClip out = trim_silence(clip, -60.0);
  CHECK(out.samples.size() >= 6000 - hop);
  CHECK(out.samples.size() <= 6000 + 2 * hop);
}

TEST_CASE("trim_silence signals entirely silent clips with an empty result") {
  AudioClip clip;
  clip.sample_rate = 8000;
  clip.samples.assign(4000, 0.0);
  CHECK(trim_silence(clip, -60.0).empty());
  CHECK_THROWS_AS(trim_silence(clip, 10.0), std::invalid_argument);
}

TEST_CASE("wav round trip and channel averaging") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcaudio_wav_test";
  fs::create_directories(dir);
  AudioClip clip = make_bandpass_noise(300, 3000, 16000, 0.1, 4);
  const std::string path = (dir / "round.wav").string();
  write_wav(path, clip.samples, clip.sample_rate);
  WavData back = read_wav(path);
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == clip.samples.size());
  double worst = 0;
  for (std::size_t i = 0; i < back.samples.size(); ++i)
    worst = std::max(worst, std::fabs(back.samples[i] - clip.samples[i]));
  CHECK(worst < 1.0 / 32000.0);  // 16-bit quantization
  fs::remove_all(dir);
}
