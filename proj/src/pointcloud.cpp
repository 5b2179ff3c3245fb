#include "pcaudio/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "pcaudio/csvio.hpp"
#include "pcaudio/rng.hpp"

namespace pcaudio {

namespace {

std::size_t keep_count(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample: fraction must be in (0, 1], got " +
                                std::to_string(fraction));
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
}

PointCloud take_points(const PointCloud& cloud, const std::vector<std::size_t>& keep) {
  PointCloud out;
  out.dims = cloud.dims;
  out.label = cloud.label;
  out.n_fft = cloud.n_fft;
  out.sample_rate = cloud.sample_rate;
  out.coords.reserve(keep.size() * cloud.dims);
  for (std::size_t i : keep)
    for (int d = 0; d < cloud.dims; ++d) out.coords.push_back(cloud.coord(i, d));
  return out;
}

// Descending score with deterministic (frequency, time) tie-breaking.
std::vector<std::size_t> top_k_by(const PointCloud& cloud, const std::vector<double>& score,
                                  std::size_t k) {
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    if (cloud.freq_of(a) != cloud.freq_of(b)) return cloud.freq_of(a) < cloud.freq_of(b);
    return cloud.time_of(a) < cloud.time_of(b);
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

double scale_magnitude(double mag, std::size_t n_fft, const ScaleCfg& cfg) {
  double m = mag;
  if (cfg.normalize && n_fft > 0) m = 2.0 * mag / static_cast<double>(n_fft);
  if (cfg.kind == ScaleCfg::Kind::linear) return m;
  const double db = std::max(cfg.floor_db, 20.0 * std::log10(m + 1e-8));
  return db / cfg.range_db;
}

PointCloud frame_to_cloud(const std::vector<double>& frame, std::uint32_t sample_rate,
                          std::size_t n_fft, const ScaleCfg& cfg) {
  if (frame.size() != n_fft / 2 + 1) {
    throw std::invalid_argument("frame_to_cloud: frame length " + std::to_string(frame.size()) +
                                " != n_fft/2+1 = " + std::to_string(n_fft / 2 + 1));
  }
  PointCloud cloud;
  cloud.dims = 2;
  cloud.n_fft = n_fft;
  cloud.sample_rate = sample_rate;
  cloud.coords.reserve(frame.size() * 2);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double f_hz =
        static_cast<double>(i) * sample_rate / static_cast<double>(n_fft);
    cloud.coords.push_back(f_hz / 1000.0);
    cloud.coords.push_back(scale_magnitude(frame[i], n_fft, cfg));
  }
  return cloud;
}

PointCloud spectrogram_to_cloud(const MagnitudeSpectrogram& spec, const ScaleCfg& cfg) {
  if (spec.num_frames() < 1) {
    throw std::invalid_argument("spectrogram_to_cloud: spectrogram has no frames");
  }
  PointCloud cloud;
  cloud.dims = 3;
  cloud.n_fft = spec.n_fft;
  cloud.sample_rate = spec.sample_rate;
  cloud.has_grid = true;
  cloud.grid_rows = spec.num_frames();
  cloud.grid_cols = spec.num_bins();
  cloud.coords.reserve(spec.num_frames() * spec.num_bins() * 3);
  for (std::size_t t = 0; t < spec.num_frames(); ++t) {
    for (std::size_t j = 0; j < spec.num_bins(); ++j) {
      const double f_hz =
          static_cast<double>(j) * spec.sample_rate / static_cast<double>(spec.n_fft);
      cloud.coords.push_back(spec.frame_times[t]);
      cloud.coords.push_back(f_hz / 1000.0);
      cloud.coords.push_back(scale_magnitude(spec.at(t, j), spec.n_fft, cfg));
    }
  }
  return cloud;
}

PointCloud subsample_topk(const PointCloud& cloud, double fraction) {
  const std::size_t k = keep_count(fraction, cloud.size());
  if (k == cloud.size()) return cloud;
  std::vector<double> score(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) score[i] = cloud.mag_of(i);
  return take_points(cloud, top_k_by(cloud, score, k));
}

PointCloud subsample_random(const PointCloud& cloud, double fraction, std::uint64_t seed) {
  const std::size_t k = keep_count(fraction, cloud.size());
  if (k == cloud.size()) return cloud;
  Rng rng(seed);
  return take_points(cloud, rng.sample_without_replacement(cloud.size(), k));
}

PointCloud subsample_gradient(const PointCloud& cloud, double fraction) {
  if (!cloud.has_grid || cloud.dims != 3) {
    throw std::invalid_argument(
        "subsample_gradient: cloud has no grid provenance (gradient undefined on scattered "
        "points)");
  }
  const std::size_t rows = cloud.grid_rows, cols = cloud.grid_cols;
  if (rows * cols != cloud.size()) {
    throw std::invalid_argument("subsample_gradient: grid shape does not match point count");
  }
  const std::size_t k = keep_count(fraction, cloud.size());
  if (k == cloud.size()) return cloud;

  auto mag = [&](std::size_t t, std::size_t f) { return cloud.mag_of(t * cols + f); };
  std::vector<double> score(cloud.size());
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t f = 0; f < cols; ++f) {
      double dt;
      if (rows == 1) {
        dt = 0;
      } else if (t == 0) {
        dt = mag(1, f) - mag(0, f);
      } else if (t == rows - 1) {
        dt = mag(t, f) - mag(t - 1, f);
      } else {
        dt = (mag(t + 1, f) - mag(t - 1, f)) / 2.0;
      }
      double df;
      if (cols == 1) {
        df = 0;
      } else if (f == 0) {
        df = mag(t, 1) - mag(t, 0);
      } else if (f == cols - 1) {
        df = mag(t, f) - mag(t, f - 1);
      } else {
        df = (mag(t, f + 1) - mag(t, f - 1)) / 2.0;
      }
      score[t * cols + f] = std::sqrt(dt * dt + df * df);
    }
  }
  return take_points(cloud, top_k_by(cloud, score, k));
}

CloudBatch batch(const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw std::invalid_argument("batch: empty cloud list");
  CloudBatch out;
  out.batch = clouds.size();
  out.dims = clouds[0].dims;
  for (const PointCloud& c : clouds) {
    if (c.size() == 0) throw std::invalid_argument("batch: empty point cloud");
    if (c.dims != out.dims) {
      throw std::invalid_argument("batch: mixed point dimensionalities " +
                                  std::to_string(out.dims) + " vs " + std::to_string(c.dims));
    }
    out.n_max = std::max(out.n_max, c.size());
  }
  out.coords.assign(out.batch * out.n_max * out.dims, 0.0);
  out.mask.assign(out.batch * out.n_max, 0);
  out.labels.resize(out.batch);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const PointCloud& c = clouds[b];
    out.labels[b] = c.label;
    std::copy(c.coords.begin(), c.coords.end(),
              out.coords.begin() + static_cast<long>(b * out.n_max * out.dims));
    std::fill(out.mask.begin() + static_cast<long>(b * out.n_max),
              out.mask.begin() + static_cast<long>(b * out.n_max + c.size()), std::uint8_t{1});
  }
  return out;
}

void save_cloud_csv(const PointCloud& cloud, const std::string& csv_path,
                    const std::string& sidecar_path) {
  std::vector<std::string> header;
  if (cloud.dims == 3) header = {"t", "f", "m"};
  else header = {"f", "m"};
  CsvWriter csv(csv_path, header);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::vector<std::string> cells;
    for (int d = 0; d < cloud.dims; ++d) cells.push_back(format_double(cloud.coord(i, d)));
    csv.row(cells);
  }

  nlohmann::json meta;
  meta["dims"] = cloud.dims;
  meta["points"] = cloud.size();
  meta["label"] = cloud.label;
  meta["n_fft"] = cloud.n_fft;
  meta["sample_rate"] = cloud.sample_rate;
  meta["f_unit"] = "kHz";
  meta["t_unit"] = "s";
  std::ofstream side(sidecar_path);
  if (!side) throw std::runtime_error("save_cloud_csv: cannot open " + sidecar_path);
  side << meta.dump(2) << "\n";
}

}  // namespace pcaudio
