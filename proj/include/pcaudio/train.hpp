#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcaudio/dataset.hpp"
#include "pcaudio/models.hpp"

namespace pcaudio {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 500;
  double l2_lambda = 1e-3;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  // Per-example cloud subsampling, redrawn every epoch.
  std::string subsample_strategy = "none";  // none | random | topk | gradient
  double subsample_fraction = 1.0;
};

// Adam with bias correction. The l2 penalty is added to the gradients of
// decay-flagged parameters before the update (biases, inducing points and
// PMA seeds are exempt).
class Adam {
 public:
  Adam(std::vector<Param>& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void zero_grad();
  void step(double l2_lambda);

 private:
  std::vector<Param>* params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<real>> m_, v_;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0;
  double train_accuracy = 0;
  double seconds = 0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  double total_seconds = 0;
  double mean_epoch_seconds() const {
    if (epochs.empty()) return 0;
    return total_seconds / static_cast<double>(epochs.size());
  }
};

TrainHistory train(Classifier& model, const FeaturizedDataset& data, const TrainConfig& cfg);

// epoch,loss,train_accuracy rows; timings are deliberately excluded so the
// file is byte-stable across reruns.
void write_history_csv(const TrainHistory& history, const std::string& path);

struct EvalReport {
  double accuracy = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> confusion;  // [C x C], row = true label
  std::size_t examples = 0;
  double seconds = 0;

  nlohmann::json to_json() const;
};

EvalReport evaluate(const Classifier& model, const std::vector<Example>& examples);

// ---- experiment sweeps ---------------------------------------------------

struct ReprCell {
  std::size_t n_fft = 0;
  std::uint32_t sample_rate = 0;
  bool supported = true;
  double accuracy = 0;
};

// Re-analyzes the raw test clips at each (window, rate) and evaluates.
// Fixed-input models run through the padding adapter and report
// unsupported cells for windows larger than the training geometry.
std::vector<ReprCell> sweep_repr(const Classifier& model, const FeaturizeSpec& base,
                                 const std::vector<AudioClip>& test_clips,
                                 const std::vector<std::size_t>& window_sizes,
                                 const std::vector<std::uint32_t>& sample_rates,
                                 std::size_t jobs = 1);

void write_repr_csv(const std::vector<ReprCell>& cells, const std::string& path);

struct SubsampleRow {
  std::string strategy;
  double fraction = 0;
  double mean_accuracy = 0;
  double std_accuracy = 0;
  std::size_t repeats = 1;
};

// Deterministic strategies run once (std exactly 0); random runs `repeats`
// seeded draws. Fixed-vector models keep the selected bins and zero the rest.
std::vector<SubsampleRow> sweep_subsample(const Classifier& model,
                                          const std::vector<Example>& test_examples,
                                          const std::vector<double>& fractions,
                                          const std::vector<std::string>& strategies,
                                          std::size_t repeats, std::uint64_t seed,
                                          std::size_t jobs = 1);

void write_subsample_csv(const std::vector<SubsampleRow>& rows, const std::string& path);

// Applies one subsampling strategy to a featurized example.
Example subsample_example(const Example& ex, const std::string& strategy, double fraction,
                          std::uint64_t seed);

struct SubsampledTrainReport {
  double full_accuracy = 0;
  double subsampled_accuracy = 0;
  double full_epoch_seconds = 0;
  double subsampled_epoch_seconds = 0;
  TrainHistory full_history, subsampled_history;
};

// Trains the same architecture twice from one init seed, full-cloud vs
// per-epoch random subsampling, and reports the paired accuracies and
// per-epoch wall-clock.
SubsampledTrainReport train_subsampled(const ModelSpec& spec, std::uint64_t init_seed,
                                       const FeaturizedDataset& data, const TrainConfig& cfg,
                                       double fraction);

}  // namespace pcaudio
