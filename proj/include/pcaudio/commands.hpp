#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pcaudio/dataset.hpp"
#include "pcaudio/train.hpp"

namespace pcaudio::cli {

inline constexpr const char* kVersionString = "pcaudio 0.1.0";

// Flat `key = value` configuration with '#' comments. Every key must be
// consumed by the command; unknown keys are errors.
class KeyValueConfig {
 public:
  static KeyValueConfig parse_file(const std::string& path);
  static KeyValueConfig parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  bool get_bool(const std::string& key, bool fallback);
  // Throws "missing config key: <key>" when absent.
  std::string require_string(const std::string& key);

  // Throws when any key was never consumed (catches typos and stale keys).
  void finish() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> consumed_;
  const std::string* lookup(const std::string& key);
};

// "lo-hi[@gain_db]" bands joined by '+', classes joined by ';'.
std::vector<ToyClassSpec> parse_class_bands(const std::string& text);

struct GenToyResult {
  std::string manifest_path;
  std::size_t clips_written = 0;
};
GenToyResult cmd_gen_toy(const ToySpec& spec, const std::string& out_dir);

struct IngestResult {
  std::string manifest_path;
  IngestReport report;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};
IngestResult cmd_ingest(const std::string& root, std::uint64_t split_seed, double trim_db,
                        const std::string& out_manifest);

struct TrainResult {
  std::string run_dir;
  std::string checkpoint_path;
  std::string history_path;
  double test_accuracy = 0;
};
// preset: fst-toy | fst | tst3 | fb-toy | fb | cnn (from --preset or config).
TrainResult cmd_train(const std::string& manifest_path, const std::string& preset_flag,
                      const std::string& config_path, const std::string& out_base,
                      std::optional<std::uint64_t> seed_flag = std::nullopt);

struct EvalResult {
  std::string report_path;
  double accuracy = 0;
};
EvalResult cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
                    const std::string& out_dir);

struct SweepResult {
  std::string csv_path;
  std::string json_path;
  std::vector<ReprCell> repr_cells;        // kind == repr
  std::vector<SubsampleRow> subsample_rows;  // kind == subsample
};
SweepResult cmd_sweep_repr(const std::string& checkpoint_path, const std::string& manifest_path,
                           const std::vector<std::size_t>& windows,
                           const std::vector<std::uint32_t>& rates, const std::string& out_dir,
                           std::size_t jobs);
SweepResult cmd_sweep_subsample(const std::string& checkpoint_path,
                                const std::string& manifest_path,
                                const std::vector<double>& fractions,
                                const std::vector<std::string>& strategies, std::size_t repeats,
                                std::uint64_t seed, const std::string& out_dir,
                                std::size_t jobs);

struct ReportResult {
  std::string report_path;
  std::string attention_csv_path;  // empty when no cloud-model run was given
};
// Consolidates run directories: parameter/MAC table for the paper presets,
// per-run summaries, and an attention dump for one test example of the
// first cloud-model run.
ReportResult cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                        std::size_t clip_index = 0);

// Creates <base>/<name>-NNN, never reusing an existing directory.
std::string make_run_dir(const std::string& base, const std::string& name);

}  // namespace pcaudio::cli
