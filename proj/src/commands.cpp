#include "pcaudio/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pcaudio/csvio.hpp"
#include "pcaudio/rng.hpp"

namespace fs = std::filesystem;

namespace pcaudio::cli {

namespace {

constexpr int kRunFormatVersion = 1;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

struct Preset {
  ModelSpec spec;
  FeaturizeSpec feat;
  std::size_t default_batch = 64;
};

Preset build_preset(const std::string& name, std::size_t classes, KeyValueConfig& cfg) {
  Preset p;
  if (name == "fst-toy") {
    p.spec = ModelSpec::fst_toy();
    p.feat.mode = FeaturizeSpec::Mode::frames;
    p.feat.n_fft = 126;  // 64 spectral bins
  } else if (name == "fst") {
    p.spec = ModelSpec::fst_full(classes);
    p.feat.mode = FeaturizeSpec::Mode::frames;
    p.feat.n_fft = 2048;
  } else if (name == "tst3") {
    p.spec = ModelSpec::tst3_full(classes);
    p.feat.mode = FeaturizeSpec::Mode::spectrogram;
    p.feat.n_fft = 1024;
    p.default_batch = 32;
  } else if (name == "fb-toy") {
    p.spec = ModelSpec::fb_toy();
    p.feat.mode = FeaturizeSpec::Mode::frames;
    p.feat.n_fft = 126;
  } else if (name == "fb") {
    p.spec = ModelSpec::fb_full(0, classes);  // input sized below
    p.feat.mode = FeaturizeSpec::Mode::frames;
    p.feat.n_fft = 2048;
  } else if (name == "cnn") {
    p.spec = ModelSpec::cnn_full(0, classes);
    p.feat.mode = FeaturizeSpec::Mode::spectrogram;
    p.feat.n_fft = 1024;
    p.default_batch = 32;
  } else {
    throw std::invalid_argument(
        "unknown preset '" + name + "' (expected fst-toy|fst|tst3|fb-toy|fb|cnn)");
  }
  p.spec.classes = classes;

  p.feat.n_fft = cfg.get_size("n_fft", p.feat.n_fft);
  p.feat.hop = cfg.get_size("hop", 0);
  const std::string window = cfg.get_string("window", "hann");
  if (window != "hann" && window != "rect") {
    throw std::invalid_argument("config: window must be hann or rect, got " + window);
  }
  p.feat.window = window == "hann" ? Window::hann : Window::rect;
  const std::string scl = cfg.get_string("scale", "db");
  if (scl != "db" && scl != "linear") {
    throw std::invalid_argument("config: scale must be db or linear, got " + scl);
  }
  p.feat.scale.kind = scl == "db" ? ScaleCfg::Kind::db : ScaleCfg::Kind::linear;
  p.feat.group_frames = cfg.get_size("group_frames", p.feat.group_frames);
  p.feat.train_n_fft = p.feat.n_fft;

  if (p.spec.kind == ModelKind::fst || p.spec.kind == ModelKind::tst3) {
    p.spec.hidden = cfg.get_size("hidden", p.spec.hidden);
    p.spec.heads = cfg.get_size("heads", p.spec.heads);
    p.spec.inducing = cfg.get_size("inducing", p.spec.inducing);
    p.spec.layer_norm = cfg.get_bool("layer_norm", p.spec.layer_norm);
    p.spec.scale_attention = cfg.get_bool("scale_attention", p.spec.scale_attention);
  }
  if (p.spec.kind == ModelKind::fb) {
    p.spec.input_dim = p.feat.n_fft / 2 + 1;
    p.spec.dropout_p = cfg.get_double("dropout_p", p.spec.dropout_p);
    if (name == "fb-toy") p.spec.fb_hidden = {8};
  }
  if (p.spec.kind == ModelKind::cnn) {
    p.spec.input_dim = p.feat.n_fft / 2 + 1;
    p.spec.cnn_frames = p.feat.group_frames;
    p.spec.cnn_channels = cfg.get_size("cnn_channels", p.spec.cnn_channels);
  }
  return p;
}

std::vector<AudioClip> test_clips_of(const DatasetManifest& manifest,
                                     const std::string& base_dir) {
  LoadedDataset data = load_clips(manifest, base_dir);
  return data.test_clips;
}

// Checkpoint extra payload: featurization + dataset provenance.
nlohmann::json checkpoint_extra(const FeaturizeSpec& feat, const std::string& manifest_path,
                                const std::vector<std::string>& class_names) {
  nlohmann::json extra;
  extra["featurize"] = feat.to_json();
  extra["manifest"] = manifest_path;
  extra["classes"] = class_names;
  return extra;
}

struct LoadedCheckpoint {
  std::unique_ptr<Classifier> model;
  FeaturizeSpec feat;
  std::string manifest_path;
};

LoadedCheckpoint open_checkpoint(const std::string& checkpoint_path,
                                 const std::string& manifest_override) {
  LoadedCheckpoint lc;
  nlohmann::json extra;
  lc.model = load_checkpoint(checkpoint_path, &extra);
  if (!extra.contains("featurize")) {
    throw std::runtime_error("checkpoint " + checkpoint_path + " lacks featurization metadata");
  }
  lc.feat = FeaturizeSpec::from_json(extra.at("featurize"));
  lc.manifest_path =
      manifest_override.empty() ? extra.at("manifest").get<std::string>() : manifest_override;
  return lc;
}

}  // namespace

// ---- KeyValueConfig -------------------------------------------------------

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config " + origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config " + origin + ":" + std::to_string(lineno) +
                                  ": empty key");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

const std::string* KeyValueConfig::lookup(const std::string& key) {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  consumed_[key] = true;
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  try {
    return std::stod(*v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not a number: " + *v);
  }
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  try {
    return static_cast<std::size_t>(std::stoull(*v));
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not an integer: " + *v);
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  try {
    return std::stoull(*v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not an integer: " + *v);
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' is not a boolean: " + *v);
}

std::string KeyValueConfig::require_string(const std::string& key) {
  const std::string* v = lookup(key);
  if (!v) throw std::invalid_argument("missing config key: " + key);
  return *v;
}

void KeyValueConfig::finish() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) {
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
  }
  if (!unknown.empty()) {
    throw std::invalid_argument("config " + origin_ + ": unknown keys: " + unknown);
  }
}

// ---- band parsing ----------------------------------------------------------

std::vector<ToyClassSpec> parse_class_bands(const std::string& text) {
  std::vector<ToyClassSpec> classes;
  std::istringstream class_stream(text);
  std::string class_part;
  while (std::getline(class_stream, class_part, ';')) {
    class_part = trim(class_part);
    if (class_part.empty()) continue;
    ToyClassSpec cls;
    std::istringstream band_stream(class_part);
    std::string band_part;
    while (std::getline(band_stream, band_part, '+')) {
      band_part = trim(band_part);
      BandSpec band;
      double gain = 0.0;
      const auto at = band_part.find('@');
      std::string range = band_part;
      if (at != std::string::npos) {
        gain = std::stod(band_part.substr(at + 1));
        range = band_part.substr(0, at);
      }
      const auto dash = range.find('-');
      if (dash == std::string::npos) {
        throw std::invalid_argument("bands: expected 'lo-hi[@gain]', got '" + band_part + "'");
      }
      band.f_lo = std::stod(range.substr(0, dash));
      band.f_hi = std::stod(range.substr(dash + 1));
      band.gain_db = gain;
      cls.bands.push_back(band);
    }
    if (cls.bands.empty()) {
      throw std::invalid_argument("bands: class '" + class_part + "' has no bands");
    }
    classes.push_back(std::move(cls));
  }
  if (classes.size() < 2) {
    throw std::invalid_argument("bands: need at least 2 classes separated by ';'");
  }
  return classes;
}

// ---- run dirs ---------------------------------------------------------------

std::string make_run_dir(const std::string& base, const std::string& name) {
  fs::create_directories(base);
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc;
  gmtime_r(&now, &tm_utc);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
  std::string dir = (fs::path(base) / (name + "-" + stamp)).string();
  std::string candidate = dir;
  for (int i = 2; fs::exists(candidate); ++i) {
    candidate = dir + "-" + std::to_string(i);
  }
  fs::create_directories(candidate);
  return candidate;
}

// ---- commands ---------------------------------------------------------------

GenToyResult cmd_gen_toy(const ToySpec& spec, const std::string& out_dir) {
  DatasetManifest manifest = generate_toy_dataset(spec, out_dir);
  GenToyResult result;
  result.manifest_path = (fs::path(out_dir) / "manifest.json").string();
  result.clips_written = manifest.entries.size();
  return result;
}

IngestResult cmd_ingest(const std::string& root, std::uint64_t split_seed, double trim_db,
                        const std::string& out_manifest) {
  IngestResult result;
  DatasetManifest manifest = ingest_directory(root, split_seed, trim_db, &result.report);
  manifest.root = fs::absolute(root).string();
  manifest.save(out_manifest);
  result.manifest_path = out_manifest;
  for (const ManifestEntry& e : manifest.entries) {
    (e.split == "train" ? result.train_count : result.test_count)++;
  }
  return result;
}

TrainResult cmd_train(const std::string& manifest_path, const std::string& preset_flag,
                      const std::string& config_path, const std::string& out_base,
                      std::optional<std::uint64_t> seed_flag) {
  KeyValueConfig cfg = config_path.empty()
                           ? KeyValueConfig::parse_string("", "<none>")
                           : KeyValueConfig::parse_file(config_path);
  const std::string preset_name =
      !preset_flag.empty() ? preset_flag : cfg.require_string("preset");
  if (!preset_flag.empty() && cfg.has("preset")) cfg.get_string("preset", "");

  DatasetManifest manifest = DatasetManifest::load(manifest_path);
  const std::string base_dir = fs::path(manifest_path).parent_path().string();
  LoadedDataset data = load_clips(manifest, base_dir);
  if (data.num_classes < 2) throw std::runtime_error("train: manifest has fewer than 2 classes");

  Preset preset = build_preset(preset_name, data.num_classes, cfg);

  TrainConfig tc;
  tc.learning_rate = cfg.get_double("learning_rate", 1e-3);
  tc.epochs = cfg.get_size("epochs", 500);
  tc.l2_lambda = cfg.get_double("l2_lambda", 1e-3);
  tc.batch_size = cfg.get_size("batch_size", preset.default_batch);
  tc.seed = seed_flag ? *seed_flag : cfg.get_u64("seed", 0);
  if (seed_flag && cfg.has("seed")) cfg.get_u64("seed", 0);
  tc.subsample_strategy = cfg.get_string("train_subsample_strategy", "none");
  tc.subsample_fraction = cfg.get_double("train_subsample_fraction", 1.0);
  cfg.finish();

  FeaturizedDataset featurized = featurize_dataset(data, preset.feat, preset.spec.kind);
  if (featurized.train.empty()) {
    throw std::runtime_error(
        "train: featurization produced no training examples (preset '" + preset_name +
        "' needs clips of at least " +
        std::to_string(preset.feat.n_fft *
                       (preset.feat.mode == FeaturizeSpec::Mode::spectrogram
                            ? preset.feat.group_frames
                            : 1)) +
        " samples)");
  }

  auto model = make_classifier(preset.spec, mix_seed(tc.seed, 0x1717));
  const auto start = std::chrono::steady_clock::now();
  TrainHistory history = train(*model, featurized, tc);
  const double train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  TrainResult result;
  result.run_dir = make_run_dir(out_base, preset_name);
  result.checkpoint_path = (fs::path(result.run_dir) / "checkpoint.json").string();
  result.history_path = (fs::path(result.run_dir) / "history.csv").string();
  if (!featurized.test.empty()) {
    result.test_accuracy = evaluate(*model, featurized.test).accuracy;
  }

  save_checkpoint(*model, result.checkpoint_path,
                  checkpoint_extra(preset.feat, fs::absolute(manifest_path).string(),
                                   manifest.class_names));
  write_history_csv(history, result.history_path);

  nlohmann::json run;
  run["format_version"] = kRunFormatVersion;
  run["version"] = kVersionString;
  run["command"] = "train";
  run["preset"] = preset_name;
  run["manifest"] = fs::absolute(manifest_path).string();
  run["model"] = preset.spec.to_json();
  run["featurize"] = preset.feat.to_json();
  run["train_config"] = {{"learning_rate", tc.learning_rate},
                         {"epochs", tc.epochs},
                         {"l2_lambda", tc.l2_lambda},
                         {"batch_size", tc.batch_size},
                         {"seed", tc.seed},
                         {"train_subsample_strategy", tc.subsample_strategy},
                         {"train_subsample_fraction", tc.subsample_fraction}};
  run["param_count"] = count_params(*model);
  run["train_examples"] = featurized.train.size();
  run["test_examples"] = featurized.test.size();
  run["test_accuracy"] = result.test_accuracy;
  run["final_train_loss"] = history.epochs.back().loss;
  run["seconds"] = train_seconds;
  write_json_file(run, (fs::path(result.run_dir) / "run.json").string());
  return result;
}

EvalResult cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path,
                    const std::string& out_dir) {
  LoadedCheckpoint lc = open_checkpoint(checkpoint_path, manifest_path);
  DatasetManifest manifest = DatasetManifest::load(lc.manifest_path);
  const std::string base_dir = fs::path(lc.manifest_path).parent_path().string();
  LoadedDataset data = load_clips(manifest, base_dir);
  FeaturizedDataset featurized = featurize_dataset(data, lc.feat, lc.model->kind());
  if (featurized.test.empty()) throw std::runtime_error("eval: no test examples");
  EvalReport report = evaluate(*lc.model, featurized.test);

  fs::create_directories(out_dir);
  EvalResult result;
  result.accuracy = report.accuracy;
  result.report_path = (fs::path(out_dir) / "eval.json").string();
  nlohmann::json j = report.to_json();
  j["checkpoint"] = checkpoint_path;
  j["manifest"] = lc.manifest_path;
  write_json_file(j, result.report_path);

  CsvWriter csv((fs::path(out_dir) / "confusion.csv").string(), {"true", "predicted", "count"});
  for (std::size_t r = 0; r < report.num_classes; ++r)
    for (std::size_t c = 0; c < report.num_classes; ++c)
      csv.row({std::to_string(r), std::to_string(c),
               std::to_string(report.confusion[r * report.num_classes + c])});
  return result;
}

SweepResult cmd_sweep_repr(const std::string& checkpoint_path, const std::string& manifest_path,
                           const std::vector<std::size_t>& windows,
                           const std::vector<std::uint32_t>& rates, const std::string& out_dir,
                           std::size_t jobs) {
  if (windows.empty() || rates.empty()) {
    throw std::invalid_argument("sweep repr: need at least one window and one rate");
  }
  LoadedCheckpoint lc = open_checkpoint(checkpoint_path, manifest_path);
  DatasetManifest manifest = DatasetManifest::load(lc.manifest_path);
  const std::string base_dir = fs::path(lc.manifest_path).parent_path().string();
  std::vector<AudioClip> clips = test_clips_of(manifest, base_dir);
  if (clips.empty()) throw std::runtime_error("sweep repr: manifest has no test clips");

  SweepResult result;
  result.repr_cells = sweep_repr(*lc.model, lc.feat, clips, windows, rates, jobs);

  fs::create_directories(out_dir);
  result.csv_path = (fs::path(out_dir) / "repr_sweep.csv").string();
  result.json_path = (fs::path(out_dir) / "repr_sweep.json").string();
  write_repr_csv(result.repr_cells, result.csv_path);
  nlohmann::json j;
  j["format_version"] = kRunFormatVersion;
  j["version"] = kVersionString;
  j["kind"] = "repr";
  j["checkpoint"] = checkpoint_path;
  nlohmann::json cells = nlohmann::json::array();
  for (const ReprCell& c : result.repr_cells) {
    cells.push_back({{"n_fft", c.n_fft},
                     {"sample_rate", c.sample_rate},
                     {"supported", c.supported},
                     {"accuracy", c.accuracy}});
  }
  j["cells"] = std::move(cells);
  write_json_file(j, result.json_path);
  return result;
}

SweepResult cmd_sweep_subsample(const std::string& checkpoint_path,
                                const std::string& manifest_path,
                                const std::vector<double>& fractions,
                                const std::vector<std::string>& strategies, std::size_t repeats,
                                std::uint64_t seed, const std::string& out_dir,
                                std::size_t jobs) {
  if (fractions.empty() || strategies.empty()) {
    throw std::invalid_argument("sweep subsample: need fractions and strategies");
  }
  LoadedCheckpoint lc = open_checkpoint(checkpoint_path, manifest_path);
  DatasetManifest manifest = DatasetManifest::load(lc.manifest_path);
  const std::string base_dir = fs::path(lc.manifest_path).parent_path().string();
  LoadedDataset data = load_clips(manifest, base_dir);
  FeaturizedDataset featurized = featurize_dataset(data, lc.feat, lc.model->kind());
  if (featurized.test.empty()) throw std::runtime_error("sweep subsample: no test examples");

  SweepResult result;
  result.subsample_rows =
      sweep_subsample(*lc.model, featurized.test, fractions, strategies, repeats, seed, jobs);

  fs::create_directories(out_dir);
  result.csv_path = (fs::path(out_dir) / "subsample_sweep.csv").string();
  result.json_path = (fs::path(out_dir) / "subsample_sweep.json").string();
  write_subsample_csv(result.subsample_rows, result.csv_path);
  nlohmann::json j;
  j["format_version"] = kRunFormatVersion;
  j["version"] = kVersionString;
  j["kind"] = "subsample";
  j["checkpoint"] = checkpoint_path;
  j["repeats"] = repeats;
  j["seed"] = seed;
  nlohmann::json rows = nlohmann::json::array();
  for (const SubsampleRow& r : result.subsample_rows) {
    rows.push_back({{"strategy", r.strategy},
                    {"fraction", r.fraction},
                    {"mean_accuracy", r.mean_accuracy},
                    {"std_accuracy", r.std_accuracy},
                    {"repeats", r.repeats}});
  }
  j["rows"] = std::move(rows);
  write_json_file(j, result.json_path);
  return result;
}

ReportResult cmd_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                        std::size_t clip_index) {
  if (run_dirs.empty()) throw std::runtime_error("report: no run directories given");

  nlohmann::json runs = nlohmann::json::array();
  std::string attention_checkpoint;
  for (const std::string& dir : run_dirs) {
    const std::string run_path = (fs::path(dir) / "run.json").string();
    if (!fs::exists(run_path)) {
      throw std::runtime_error("report: " + dir + " has no run.json");
    }
    nlohmann::json run = read_json_file(run_path);
    const int version = run.at("format_version").get<int>();
    if (version != kRunFormatVersion) {
      throw std::runtime_error("report: run " + dir + " has format version " +
                               std::to_string(version) + ", expected " +
                               std::to_string(kRunFormatVersion));
    }
    run["dir"] = dir;
    const std::string kind = run.at("model").at("kind").get<std::string>();
    if (attention_checkpoint.empty() && (kind == "fst" || kind == "tst3")) {
      attention_checkpoint = (fs::path(dir) / "checkpoint.json").string();
    }
    runs.push_back(std::move(run));
  }

  // Parameter/MAC table for the paper presets.
  nlohmann::json table = nlohmann::json::array();
  struct PresetRow {
    const char* name;
    ModelSpec spec;
    std::size_t cloud_points;
  };
  const std::vector<PresetRow> preset_rows = {
      {"fst", ModelSpec::fst_full(10), 1025},
      {"fb", ModelSpec::fb_full(1025, 10), 0},
      {"tst3", ModelSpec::tst3_full(10), 5130},
      {"cnn", ModelSpec::cnn_full(513, 10), 0},
  };
  std::map<std::string, std::size_t> param_counts;
  for (const PresetRow& row : preset_rows) {
    auto model = make_classifier(row.spec, 1);
    const std::size_t params = count_params(*model);
    param_counts[row.name] = params;
    table.push_back({{"model", row.name},
                     {"params", params},
                     {"macs_inference", count_macs(*model, row.cloud_points, false)},
                     {"macs_training", count_macs(*model, row.cloud_points, true)}});
  }

  nlohmann::json report;
  report["format_version"] = kRunFormatVersion;
  report["version"] = kVersionString;
  report["runs"] = std::move(runs);
  report["param_mac_table"] = std::move(table);
  report["fst_params_lt_fb"] = param_counts["fst"] < param_counts["fb"];
  report["tst3_params_lt_cnn"] = param_counts["tst3"] < param_counts["cnn"];

  // Attention dump for one test example of the first cloud-model run.
  ReportResult result;
  std::string attention_header;
  std::vector<std::string> attention_lines;
  if (!attention_checkpoint.empty()) {
    LoadedCheckpoint lc = open_checkpoint(attention_checkpoint, "");
    DatasetManifest manifest = DatasetManifest::load(lc.manifest_path);
    const std::string base_dir = fs::path(lc.manifest_path).parent_path().string();
    LoadedDataset data = load_clips(manifest, base_dir);
    FeaturizedDataset featurized = featurize_dataset(data, lc.feat, lc.model->kind());
    if (featurized.test.empty()) throw std::runtime_error("report: no test examples");
    if (clip_index >= featurized.test.size()) {
      throw std::runtime_error("report: clip index " + std::to_string(clip_index) +
                               " out of range (" + std::to_string(featurized.test.size()) +
                               " test examples)");
    }
    const Example& ex = featurized.test[clip_index];
    const PointCloud& cloud = std::get<PointCloud>(ex.input);
    const std::vector<double> weights = attention_weights(*lc.model, cloud);

    nlohmann::json att;
    att["checkpoint"] = attention_checkpoint;
    att["example_index"] = clip_index;
    att["label"] = ex.label;
    att["points"] = cloud.size();
    report["attention"] = std::move(att);

    attention_header = cloud.dims == 3 ? "t,f,m,attention" : "f,m,attention";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      std::string line;
      if (cloud.dims == 3) line += format_double(cloud.time_of(i)) + ",";
      line += format_double(cloud.freq_of(i)) + "," + format_double(cloud.mag_of(i)) + "," +
              format_double(weights[i]);
      attention_lines.push_back(std::move(line));
    }
  }

  fs::create_directories(out_dir);
  if (!attention_lines.empty()) {
    result.attention_csv_path = (fs::path(out_dir) / "attention.csv").string();
    std::ofstream att(result.attention_csv_path, std::ios::trunc);
    if (!att) throw std::runtime_error("report: cannot open " + result.attention_csv_path);
    att << attention_header << "\n";
    for (const std::string& line : attention_lines) att << line << "\n";
  }
  result.report_path = (fs::path(out_dir) / "report.json").string();
  write_json_file(report, result.report_path);
  return result;
}

}  // namespace pcaudio::cli
