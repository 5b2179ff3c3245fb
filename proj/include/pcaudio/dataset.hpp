#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcaudio/models.hpp"
#include "pcaudio/signal.hpp"

namespace pcaudio {

struct ManifestEntry {
  std::string path;  // relative to the manifest root
  int label = -1;
  std::string split;  // "train" | "test"
};

struct DatasetManifest {
  std::string root;
  std::uint32_t sample_rate = 0;  // 0 = native per-file rates
  std::uint64_t split_seed = 0;
  double trim_db = 0;  // negative = trim on load
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static DatasetManifest load(const std::string& path);
};

struct ToyClassSpec {
  std::vector<BandSpec> bands;
};

struct ToySpec {
  std::vector<ToyClassSpec> classes;
  std::size_t clips_per_class = 100;
  double duration = 0.5;
  std::uint32_t sample_rate = 8000;
  std::uint64_t seed = 0;
  bool require_exclusive = true;  // class bands must be pairwise disjoint
};

// Synthesizes WAV clips plus a manifest with a stratified 80-20 split.
DatasetManifest generate_toy_dataset(const ToySpec& spec, const std::string& out_dir);

struct IngestReport {
  std::size_t skipped_silent = 0;
  std::vector<std::string> unreadable;
};

// Scans one subdirectory per class, trims boundary silence (applied on
// load), skips clips that trim to nothing, and writes a stratified split.
DatasetManifest ingest_directory(const std::string& root, std::uint64_t split_seed,
                                 double trim_db, IngestReport* report = nullptr);

struct LoadedDataset {
  std::vector<AudioClip> train_clips, test_clips;
  std::size_t num_classes = 0;
};

LoadedDataset load_clips(const DatasetManifest& manifest, const std::string& base_dir);

// ---- featurization -----------------------------------------------------

struct FeaturizeSpec {
  enum class Mode { frames, spectrogram };
  Mode mode = Mode::frames;
  std::size_t n_fft = 2048;
  std::size_t hop = 0;  // 0 = default (n_fft for frames, n_fft/2 for spectrogram)
  Window window = Window::hann;
  ScaleCfg scale;
  std::size_t group_frames = 10;  // spectrogram mode
  std::size_t train_n_fft = 0;    // FB/CNN input geometry; 0 = n_fft

  std::size_t effective_hop() const {
    return hop ? hop : (mode == Mode::frames ? n_fft : n_fft / 2);
  }
  std::size_t effective_train_n() const { return train_n_fft ? train_n_fft : n_fft; }

  nlohmann::json to_json() const;
  static FeaturizeSpec from_json(const nlohmann::json& j);
};

struct Example {
  Features input;
  int label = -1;
};

struct FeaturizedDataset {
  std::vector<Example> train, test;
  std::size_t num_classes = 0;
};

// True when the analysis window fits the model's fixed input geometry.
bool featurize_supported(const FeaturizeSpec& spec, ModelKind kind);

std::vector<Example> featurize_clip(const AudioClip& clip, const FeaturizeSpec& spec,
                                    ModelKind kind);

FeaturizedDataset featurize_dataset(const LoadedDataset& data, const FeaturizeSpec& spec,
                                    ModelKind kind);

}  // namespace pcaudio
