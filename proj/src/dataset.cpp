#include "pcaudio/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "pcaudio/rng.hpp"
#include "pcaudio/wav.hpp"

namespace fs = std::filesystem;

namespace pcaudio {

namespace {

// Stratified 80-20 split, shuffled per class. Demands that every class
// lands in both splits.
void assign_split(std::vector<ManifestEntry>& entries, std::size_t num_classes,
                  std::uint64_t seed) {
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].label == static_cast<int>(c)) idx.push_back(i);
    }
    if (idx.size() < 2) {
      throw std::invalid_argument("split: class " + std::to_string(c) +
                                  " needs at least 2 clips, has " + std::to_string(idx.size()));
    }
    Rng rng(mix_seed(seed, c));
    rng.shuffle(idx);
    std::size_t n_train = static_cast<std::size_t>(std::llround(0.8 * idx.size()));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      entries[idx[i]].split = i < n_train ? "train" : "test";
    }
  }
}

bool bands_overlap(const BandSpec& a, const BandSpec& b) {
  return a.f_lo < b.f_hi && b.f_lo < a.f_hi;
}

std::vector<double> linear_bins(const std::vector<double>& mags, std::size_t n_fft) {
  std::vector<double> out(mags.size());
  for (std::size_t i = 0; i < mags.size(); ++i) out[i] = 2.0 * mags[i] / n_fft;
  return out;
}

}  // namespace

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json j;
  j["format_version"] = 1;
  j["root"] = root;
  j["sample_rate"] = sample_rate;
  j["split_seed"] = split_seed;
  j["trim_db"] = trim_db;
  j["classes"] = class_names;
  nlohmann::json list = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    list.push_back({{"path", e.path}, {"label", e.label}, {"split", e.split}});
  }
  j["entries"] = std::move(list);
  return j;
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.root = j.at("root").get<std::string>();
  m.sample_rate = j.at("sample_rate").get<std::uint32_t>();
  m.split_seed = j.at("split_seed").get<std::uint64_t>();
  m.trim_db = j.at("trim_db").get<double>();
  m.class_names = j.at("classes").get<std::vector<std::string>>();
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({e.at("path").get<std::string>(), e.at("label").get<int>(),
                         e.at("split").get<std::string>()});
  }
  return m;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open " + path);
  out << to_json().dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  return from_json(nlohmann::json::parse(in));
}

DatasetManifest generate_toy_dataset(const ToySpec& spec, const std::string& out_dir) {
  if (spec.classes.size() < 2) {
    throw std::invalid_argument("gen-toy: need at least 2 classes");
  }
  if (spec.clips_per_class < 5) {
    throw std::invalid_argument("gen-toy: need at least 5 clips per class for an 80-20 split");
  }
  if (spec.require_exclusive) {
    for (std::size_t a = 0; a < spec.classes.size(); ++a) {
      for (std::size_t b = a + 1; b < spec.classes.size(); ++b) {
        for (const BandSpec& ba : spec.classes[a].bands) {
          for (const BandSpec& bb : spec.classes[b].bands) {
            if (bands_overlap(ba, bb)) {
              throw std::invalid_argument(
                  "gen-toy: class bands overlap but exclusivity was requested (" +
                  std::to_string(ba.f_lo) + "-" + std::to_string(ba.f_hi) + " vs " +
                  std::to_string(bb.f_lo) + "-" + std::to_string(bb.f_hi) + " Hz)");
            }
          }
        }
      }
    }
  }

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.root = ".";
  manifest.sample_rate = spec.sample_rate;
  manifest.split_seed = spec.seed;
  manifest.trim_db = 0;

  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const std::string cls = "class" + std::to_string(c);
    manifest.class_names.push_back(cls);
    fs::create_directories(fs::path(out_dir) / cls);
    for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
      AudioClip clip = make_multiband_noise(spec.classes[c].bands, spec.sample_rate,
                                            spec.duration, mix_seed(spec.seed, c * 100003 + i));
      char name[64];
      std::snprintf(name, sizeof(name), "clip_%04zu.wav", i);
      const std::string rel = cls + "/" + name;
      write_wav((fs::path(out_dir) / rel).string(), clip.samples, spec.sample_rate);
      manifest.entries.push_back({rel, static_cast<int>(c), ""});
    }
  }
  assign_split(manifest.entries, spec.classes.size(), spec.seed);
  manifest.save((fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

DatasetManifest ingest_directory(const std::string& root, std::uint64_t split_seed,
                                 double trim_db, IngestReport* report) {
  if (!fs::is_directory(root)) {
    throw std::runtime_error("ingest: not a directory: " + root);
  }
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());

  DatasetManifest manifest;
  manifest.root = ".";
  manifest.split_seed = split_seed;
  manifest.trim_db = trim_db;
  IngestReport local;
  IngestReport& rep = report ? *report : local;

  for (const std::string& cls : class_dirs) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / cls)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") {
        files.push_back(entry.path().filename().string());
      }
    }
    std::sort(files.begin(), files.end());
    std::vector<ManifestEntry> usable;
    for (const std::string& f : files) {
      const std::string rel = cls + "/" + f;
      try {
        WavData wav = read_wav((fs::path(root) / rel).string());
        AudioClip clip{wav.samples, wav.sample_rate, -1};
        if (trim_db < 0 && trim_silence(clip, trim_db).empty()) {
          rep.skipped_silent++;
          continue;
        }
        usable.push_back({rel, -1, ""});
      } catch (const std::exception&) {
        rep.unreadable.push_back(rel);
      }
    }
    if (usable.empty()) continue;  // class vanished; labels stay dense
    const int label = static_cast<int>(manifest.class_names.size());
    manifest.class_names.push_back(cls);
    for (ManifestEntry& e : usable) {
      e.label = label;
      manifest.entries.push_back(std::move(e));
    }
  }

  if (manifest.class_names.empty()) {
    throw std::runtime_error("ingest: no usable classes under " + root);
  }
  assign_split(manifest.entries, manifest.class_names.size(), split_seed);
  return manifest;
}

LoadedDataset load_clips(const DatasetManifest& manifest, const std::string& base_dir) {
  LoadedDataset out;
  out.num_classes = manifest.class_names.size();
  for (const ManifestEntry& e : manifest.entries) {
    const std::string path = (fs::path(base_dir) / manifest.root / e.path).string();
    WavData wav = read_wav(path);
    AudioClip clip{wav.samples, wav.sample_rate, e.label};
    if (manifest.trim_db < 0) {
      clip = trim_silence(clip, manifest.trim_db);
      if (clip.empty()) continue;
    }
    (e.split == "train" ? out.train_clips : out.test_clips).push_back(std::move(clip));
  }
  return out;
}

// ---- featurization -----------------------------------------------------

nlohmann::json FeaturizeSpec::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == Mode::frames ? "frames" : "spectrogram";
  j["n_fft"] = n_fft;
  j["hop"] = hop;
  j["window"] = window == Window::hann ? "hann" : "rect";
  j["scale"] = scale.kind == ScaleCfg::Kind::db ? "db" : "linear";
  j["group_frames"] = group_frames;
  j["train_n_fft"] = train_n_fft;
  return j;
}

FeaturizeSpec FeaturizeSpec::from_json(const nlohmann::json& j) {
  FeaturizeSpec s;
  s.mode = j.at("mode").get<std::string>() == "frames" ? Mode::frames : Mode::spectrogram;
  s.n_fft = j.at("n_fft").get<std::size_t>();
  s.hop = j.at("hop").get<std::size_t>();
  s.window = j.at("window").get<std::string>() == "hann" ? Window::hann : Window::rect;
  s.scale.kind =
      j.at("scale").get<std::string>() == "db" ? ScaleCfg::Kind::db : ScaleCfg::Kind::linear;
  s.group_frames = j.at("group_frames").get<std::size_t>();
  s.train_n_fft = j.at("train_n_fft").get<std::size_t>();
  return s;
}

bool featurize_supported(const FeaturizeSpec& spec, ModelKind kind) {
  if (kind == ModelKind::fb || kind == ModelKind::cnn) {
    return spec.n_fft <= spec.effective_train_n();
  }
  return true;
}

std::vector<Example> featurize_clip(const AudioClip& clip, const FeaturizeSpec& spec,
                                    ModelKind kind) {
  if (!featurize_supported(spec, kind)) {
    throw std::invalid_argument("featurize: window of " + std::to_string(spec.n_fft) +
                                " samples exceeds the fixed-input size " +
                                std::to_string(spec.effective_train_n()));
  }
  std::vector<Example> out;
  if (clip.samples.size() < spec.n_fft) return out;  // too short for one window

  const std::size_t hop = spec.effective_hop();
  const std::size_t n_frames = (clip.samples.size() - spec.n_fft) / hop + 1;
  const std::vector<double> w = window_coefficients(spec.window, spec.n_fft);
  const std::size_t train_n = spec.effective_train_n();

  // Fixed-vector feature for FB/CNN: window, pad to the training geometry,
  // magnitude, amplitude-normalize.
  auto fixed_feature = [&](std::size_t start) {
    std::vector<double> windowed(spec.n_fft);
    for (std::size_t i = 0; i < spec.n_fft; ++i) windowed[i] = clip.samples[start + i] * w[i];
    const std::vector<double> padded =
        spec.n_fft == train_n ? windowed : pad_window_input(windowed, train_n);
    return linear_bins(dft_magnitude(padded), train_n);
  };

  if (spec.mode == FeaturizeSpec::Mode::frames) {
    const MagnitudeSpectrogram full =
        (kind == ModelKind::fst || kind == ModelKind::tst3)
            ? stft(clip, spec.n_fft, hop, spec.window)
            : MagnitudeSpectrogram{};
    for (std::size_t t = 0; t < n_frames; ++t) {
      Example ex;
      ex.label = clip.label;
      if (kind == ModelKind::fst) {
        std::vector<double> mags(full.frame(t), full.frame(t) + full.num_bins());
        PointCloud cloud = frame_to_cloud(mags, clip.sample_rate, spec.n_fft, spec.scale);
        cloud.label = clip.label;
        ex.input = std::move(cloud);
      } else if (kind == ModelKind::fb) {
        ex.input = FeatVec{fixed_feature(t * hop)};
      } else {
        throw std::invalid_argument("featurize: frame mode supports fst and fb");
      }
      out.push_back(std::move(ex));
    }
    return out;
  }

  // Spectrogram mode: consecutive groups of group_frames frames.
  if (kind == ModelKind::fst) {
    throw std::invalid_argument("featurize: spectrogram mode supports tst3 and cnn");
  }
  const std::size_t groups = n_frames / spec.group_frames;
  if (kind == ModelKind::tst3) {
    const MagnitudeSpectrogram full = stft(clip, spec.n_fft, hop, spec.window);
    for (std::size_t g = 0; g < groups; ++g) {
      MagnitudeSpectrogram slice;
      slice.n_fft = full.n_fft;
      slice.hop = full.hop;
      slice.sample_rate = full.sample_rate;
      const std::size_t f0 = g * spec.group_frames;
      slice.mags.assign(full.mags.begin() + static_cast<long>(f0 * full.num_bins()),
                        full.mags.begin() +
                            static_cast<long>((f0 + spec.group_frames) * full.num_bins()));
      slice.frame_times.assign(full.frame_times.begin() + static_cast<long>(f0),
                               full.frame_times.begin() +
                                   static_cast<long>(f0 + spec.group_frames));
      PointCloud cloud = spectrogram_to_cloud(slice, spec.scale);
      cloud.label = clip.label;
      out.push_back({Features{std::move(cloud)}, clip.label});
    }
    return out;
  }
  if (kind == ModelKind::cnn) {
    const std::size_t bins = train_n / 2 + 1;
    for (std::size_t g = 0; g < groups; ++g) {
      FeatGrid grid;
      grid.rows = spec.group_frames;
      grid.cols = bins;
      grid.values.reserve(grid.rows * bins);
      for (std::size_t t = 0; t < spec.group_frames; ++t) {
        const std::vector<double> row = fixed_feature((g * spec.group_frames + t) * hop);
        grid.values.insert(grid.values.end(), row.begin(), row.end());
      }
      out.push_back({Features{std::move(grid)}, clip.label});
    }
    return out;
  }
  throw std::invalid_argument("featurize: unsupported model kind");
}

FeaturizedDataset featurize_dataset(const LoadedDataset& data, const FeaturizeSpec& spec,
                                    ModelKind kind) {
  FeaturizedDataset out;
  out.num_classes = data.num_classes;
  for (const AudioClip& clip : data.train_clips) {
    std::vector<Example> ex = featurize_clip(clip, spec, kind);
    std::move(ex.begin(), ex.end(), std::back_inserter(out.train));
  }
  for (const AudioClip& clip : data.test_clips) {
    std::vector<Example> ex = featurize_clip(clip, spec, kind);
    std::move(ex.begin(), ex.end(), std::back_inserter(out.test));
  }
  return out;
}

}  // namespace pcaudio
