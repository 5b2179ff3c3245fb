#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

// Test-only oracles, kept independent of the library's FFT path.
namespace testutil {

// Naive O(n^2) DFT; returns one-sided magnitudes.
inline std::vector<double> naive_dft_magnitude(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> mags(n / 2 + 1);
  for (std::size_t k = 0; k < mags.size(); ++k) {
    double re = 0, im = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(t) /
                       static_cast<double>(n);
      re += x[t] * std::cos(a);
      im += x[t] * std::sin(a);
    }
    mags[k] = std::hypot(re, im);
  }
  return mags;
}

// Fraction of two-sided spectral energy that falls inside [f_lo, f_hi] Hz.
inline double band_energy_ratio(const std::vector<double>& x, double sample_rate, double f_lo,
                                double f_hi) {
  const std::vector<double> mags = naive_dft_magnitude(x);
  const std::size_t n = x.size();
  double in_band = 0, total = 0;
  for (std::size_t k = 0; k < mags.size(); ++k) {
    const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n);
    const bool interior = k != 0 && !(n % 2 == 0 && k == n / 2);
    const double e = mags[k] * mags[k] * (interior ? 2.0 : 1.0);
    total += e;
    if (f >= f_lo && f <= f_hi) in_band += e;
  }
  return total > 0 ? in_band / total : 0.0;
}

// Frequency of the largest spectral magnitude.
inline double peak_frequency(const std::vector<double>& x, double sample_rate) {
  const std::vector<double> mags = naive_dft_magnitude(x);
  std::size_t best = 0;
  for (std::size_t k = 1; k < mags.size(); ++k) {
    if (mags[k] > mags[best]) best = k;
  }
  return static_cast<double>(best) * sample_rate / static_cast<double>(x.size());
}

inline double simple_linear_r2(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  const double slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / n;
  for (std::size_t i = 0; i < n; ++i) {
    const double fit = slope * xs[i] + intercept;
    ss_res += (ys[i] - fit) * (ys[i] - fit);
    ss_tot += (ys[i] - mean) * (ys[i] - mean);
  }
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
}

inline double simple_linear_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace testutil
