#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcaudio/signal.hpp"

namespace pcaudio {

// Magnitude coordinate scaling. The default turns a raw one-sided DFT
// magnitude into amplitude-calibrated dB: 20*log10(2*mag/n_fft + 1e-8),
// floored at -80 dB and divided by 80. Amplitude calibration keeps the
// m coordinate comparable across window sizes.
struct ScaleCfg {
  enum class Kind { db, linear };
  Kind kind = Kind::db;
  bool normalize = true;
  double floor_db = -80.0;
  double range_db = 80.0;
};

double scale_magnitude(double mag, std::size_t n_fft, const ScaleCfg& cfg);

// Unordered set of 2-D (f, m) or 3-D (t, f, m) points. Frequencies are
// stored in kHz and times in seconds so that coordinates are absolute
// physical quantities, independent of n_fft and sample_rate.
struct PointCloud {
  int dims = 2;
  std::vector<double> coords;  // row-major [n x dims]
  int label = -1;
  std::size_t n_fft = 0;
  std::uint32_t sample_rate = 0;

  // Grid provenance (set by spectrogram_to_cloud, dropped by subsampling):
  // point i corresponds to row-major cell (i / grid_cols, i % grid_cols).
  bool has_grid = false;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;

  std::size_t size() const { return dims == 0 ? 0 : coords.size() / dims; }
  double coord(std::size_t i, int d) const { return coords[i * dims + d]; }
  double time_of(std::size_t i) const { return dims == 3 ? coord(i, 0) : 0.0; }
  double freq_of(std::size_t i) const { return coord(i, dims == 3 ? 1 : 0); }
  double mag_of(std::size_t i) const { return coord(i, dims == 3 ? 2 : 1); }
};

struct CloudBatch {
  std::size_t batch = 0;
  std::size_t n_max = 0;
  int dims = 0;
  std::vector<double> coords;        // [B x n_max x dims], zeros at padding
  std::vector<std::uint8_t> mask;    // [B x n_max], 1 = real point
  std::vector<int> labels;

  const double* row_coords(std::size_t b) const { return coords.data() + b * n_max * dims; }
  const std::uint8_t* row_mask(std::size_t b) const { return mask.data() + b * n_max; }
};

// One point per bin: f_i = i * sample_rate / n_fft (stored in kHz),
// m per scale_cfg.
PointCloud frame_to_cloud(const std::vector<double>& frame, std::uint32_t sample_rate,
                          std::size_t n_fft, const ScaleCfg& cfg = {});

// T * (n_fft/2+1) points of (t, f, m); t comes from absolute frame times.
PointCloud spectrogram_to_cloud(const MagnitudeSpectrogram& spec, const ScaleCfg& cfg = {});

// Keeps K = max(1, round(fraction * n)) points of largest magnitude.
// Ties break by ascending frequency, then ascending time.
PointCloud subsample_topk(const PointCloud& cloud, double fraction);

// Uniform sample without replacement; deterministic for a given seed.
PointCloud subsample_random(const PointCloud& cloud, double fraction, std::uint64_t seed);

// Scores grid-backed 3-D clouds by the spectro-temporal magnitude
// gradient (central differences, one-sided at edges) and keeps the top K.
PointCloud subsample_gradient(const PointCloud& cloud, double fraction);

// Pads to the largest cardinality with zeros and marks real points.
CloudBatch batch(const std::vector<PointCloud>& clouds);

// CSV with an (t,)f,m header plus a JSON metadata sidecar.
void save_cloud_csv(const PointCloud& cloud, const std::string& csv_path,
                    const std::string& sidecar_path);

}  // namespace pcaudio
