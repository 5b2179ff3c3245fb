#include "pcaudio/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "pcaudio/csvio.hpp"
#include "pcaudio/rng.hpp"

namespace pcaudio {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t argmax_row(const Tensor& logits, std::size_t row) {
  const std::size_t c = logits.shape()[1];
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  }
  return best;
}

// Index-ordered parallel map; results land by index so aggregation is
// order-independent.
void parallel_for(std::size_t jobs, std::size_t count,
                  const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, jobs);
  if (jobs == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < std::min(jobs, count); ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::size_t> topk_vector_indices(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  });
  idx.resize(k);
  return idx;
}

}  // namespace

Adam::Adam(std::vector<Param>& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.resize(params.size());
  v_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i].assign(params[i].value.numel(), real(0));
    v_[i].assign(params[i].value.numel(), real(0));
  }
}

void Adam::zero_grad() {
  for (Param& p : *params_) p.value.zero_grad();
}

void Adam::step(double l2_lambda) {
  ++t_;
  const real bc1 = real(1) - static_cast<real>(std::pow(beta1_, t_));
  const real bc2 = real(1) - static_cast<real>(std::pow(beta2_, t_));
  for (std::size_t i = 0; i < params_->size(); ++i) {
    Param& p = (*params_)[i];
    auto& data = p.value.data();
    auto& grad = p.value.grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      real g = grad[j];
      if (p.decay && l2_lambda > 0) g += real(2) * static_cast<real>(l2_lambda) * data[j];
      m_[i][j] = static_cast<real>(beta1_) * m_[i][j] + (real(1) - static_cast<real>(beta1_)) * g;
      v_[i][j] =
          static_cast<real>(beta2_) * v_[i][j] + (real(1) - static_cast<real>(beta2_)) * g * g;
      const real mhat = m_[i][j] / bc1;
      const real vhat = v_[i][j] / bc2;
      data[j] -= static_cast<real>(lr_) * mhat / (std::sqrt(vhat) + static_cast<real>(eps_));
    }
  }
}

Example subsample_example(const Example& ex, const std::string& strategy, double fraction,
                          std::uint64_t seed) {
  Example out;
  out.label = ex.label;
  if (const PointCloud* cloud = std::get_if<PointCloud>(&ex.input)) {
    if (strategy == "topk") {
      out.input = subsample_topk(*cloud, fraction);
    } else if (strategy == "random") {
      out.input = subsample_random(*cloud, fraction, seed);
    } else if (strategy == "gradient") {
      out.input = subsample_gradient(*cloud, fraction);
    } else {
      throw std::invalid_argument("subsample: unknown strategy " + strategy);
    }
    return out;
  }
  if (strategy == "gradient") {
    throw std::invalid_argument("subsample: gradient strategy needs grid-backed 3-D clouds");
  }
  const std::vector<double>* values = nullptr;
  if (const FeatVec* vec = std::get_if<FeatVec>(&ex.input)) values = &vec->values;
  if (const FeatGrid* grid = std::get_if<FeatGrid>(&ex.input)) values = &grid->values;
  if (!values) throw std::invalid_argument("subsample: unsupported feature kind");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample: fraction must be in (0, 1], got " +
                                std::to_string(fraction));
  }
  const std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(fraction * values->size())));
  std::vector<std::size_t> keep;
  if (strategy == "topk") {
    keep = topk_vector_indices(*values, k);
  } else if (strategy == "random") {
    Rng rng(seed);
    keep = rng.sample_without_replacement(values->size(), k);
  } else {
    throw std::invalid_argument("subsample: unknown strategy " + strategy);
  }
  std::vector<double> zeroed = zero_out(*values, keep);
  if (const FeatGrid* grid = std::get_if<FeatGrid>(&ex.input)) {
    out.input = FeatGrid{grid->rows, grid->cols, std::move(zeroed)};
  } else {
    out.input = FeatVec{std::move(zeroed)};
  }
  return out;
}

TrainHistory train(Classifier& model, const FeaturizedDataset& data, const TrainConfig& cfg) {
  if (data.train.empty()) throw std::invalid_argument("train: empty training set");
  if (cfg.learning_rate <= 0) throw std::invalid_argument("train: learning_rate must be > 0");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (!(cfg.subsample_fraction > 0.0 && cfg.subsample_fraction <= 1.0)) {
    throw std::invalid_argument("train: subsample_fraction must be in (0, 1]");
  }
  const bool subsampling =
      cfg.subsample_strategy != "none" && cfg.subsample_fraction < 1.0;
  if (subsampling && !std::holds_alternative<PointCloud>(data.train.front().input)) {
    throw std::invalid_argument("train: training-time subsampling needs a cloud-input model");
  }

  Adam opt(model.params(), cfg.learning_rate);
  TrainHistory history;
  const auto run_start = Clock::now();

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    Rng shuffle_rng(mix_seed(cfg.seed, 0x9e0 + epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      opt.zero_grad();

      std::vector<Tensor> rows;
      std::vector<int> labels;
      rows.reserve(b1 - b0);
      for (std::size_t p = b0; p < b1; ++p) {
        const std::size_t i = order[p];
        const Example* ex = &data.train[i];
        Example scratch;
        if (subsampling) {
          scratch = subsample_example(*ex, cfg.subsample_strategy, cfg.subsample_fraction,
                                      mix_seed(mix_seed(cfg.seed, epoch), i));
          ex = &scratch;
        }
        ForwardCtx ctx;
        ctx.training = true;
        ctx.dropout_seed = mix_seed(mix_seed(cfg.seed, 0xd0 + epoch), i);
        rows.push_back(model.forward(ex->input, ctx));
        labels.push_back(ex->label);
      }
      Tensor logits = rows.size() == 1 ? rows[0] : concat_rows(rows);
      Tensor loss = cross_entropy_logits(logits, labels);
      const double loss_value = static_cast<double>(loss.value());
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", batch starting at " +
                                 std::to_string(b0));
      }
      backward(loss);
      opt.step(cfg.l2_lambda);

      loss_sum += loss_value * static_cast<double>(b1 - b0);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        if (argmax_row(logits, r) == static_cast<std::size_t>(labels[r])) ++correct;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(order.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    stats.seconds = elapsed_seconds(epoch_start);
    history.epochs.push_back(stats);
  }
  history.total_seconds = elapsed_seconds(run_start);
  return history;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  CsvWriter csv(path, {"epoch", "loss", "train_accuracy"});
  for (const EpochStats& e : history.epochs) {
    csv.row({std::to_string(e.epoch), format_double(e.loss), format_double(e.train_accuracy)});
  }
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["num_classes"] = num_classes;
  j["examples"] = examples;
  j["seconds"] = seconds;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < num_classes; ++r) {
    rows.push_back(std::vector<std::size_t>(confusion.begin() + static_cast<long>(r * num_classes),
                                            confusion.begin() +
                                                static_cast<long>((r + 1) * num_classes)));
  }
  j["confusion"] = std::move(rows);
  return j;
}

EvalReport evaluate(const Classifier& model, const std::vector<Example>& examples) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const auto start = Clock::now();
  EvalReport report;
  report.num_classes = model.spec().classes;
  report.confusion.assign(report.num_classes * report.num_classes, 0);
  report.examples = examples.size();

  NoGradGuard ng;
  std::size_t correct = 0;
  for (const Example& ex : examples) {
    ForwardCtx ctx;
    Tensor logits = model.forward(ex.input, ctx);
    const std::size_t pred = argmax_row(logits, 0);
    if (pred == static_cast<std::size_t>(ex.label)) ++correct;
    report.confusion[static_cast<std::size_t>(ex.label) * report.num_classes + pred]++;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  report.seconds = elapsed_seconds(start);
  return report;
}

std::vector<ReprCell> sweep_repr(const Classifier& model, const FeaturizeSpec& base,
                                 const std::vector<AudioClip>& test_clips,
                                 const std::vector<std::size_t>& window_sizes,
                                 const std::vector<std::uint32_t>& sample_rates,
                                 std::size_t jobs) {
  std::vector<ReprCell> cells;
  for (std::size_t n : window_sizes)
    for (std::uint32_t sr : sample_rates) cells.push_back({n, sr, true, 0.0});

  parallel_for(jobs, cells.size(), [&](std::size_t ci) {
    ReprCell& cell = cells[ci];
    FeaturizeSpec feat = base;
    feat.n_fft = cell.n_fft;
    feat.train_n_fft = base.effective_train_n();
    if (!featurize_supported(feat, model.kind())) {
      cell.supported = false;
      return;
    }
    std::vector<Example> examples;
    for (const AudioClip& clip : test_clips) {
      AudioClip converted = resample(clip, cell.sample_rate);
      std::vector<Example> ex = featurize_clip(converted, feat, model.kind());
      std::move(ex.begin(), ex.end(), std::back_inserter(examples));
    }
    cell.accuracy = examples.empty() ? 0.0 : evaluate(model, examples).accuracy;
  });
  return cells;
}

void write_repr_csv(const std::vector<ReprCell>& cells, const std::string& path) {
  CsvWriter csv(path, {"n_fft", "sample_rate", "supported", "accuracy"});
  for (const ReprCell& c : cells) {
    csv.row({std::to_string(c.n_fft), std::to_string(c.sample_rate),
             c.supported ? "1" : "0", c.supported ? format_double(c.accuracy) : ""});
  }
}

std::vector<SubsampleRow> sweep_subsample(const Classifier& model,
                                          const std::vector<Example>& test_examples,
                                          const std::vector<double>& fractions,
                                          const std::vector<std::string>& strategies,
                                          std::size_t repeats, std::uint64_t seed,
                                          std::size_t jobs) {
  if (test_examples.empty()) throw std::invalid_argument("sweep_subsample: empty test set");
  struct Job {
    std::size_t si, fi;
  };
  std::vector<Job> grid;
  for (std::size_t si = 0; si < strategies.size(); ++si)
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) grid.push_back({si, fi});

  std::vector<SubsampleRow> rows(grid.size());
  parallel_for(jobs, grid.size(), [&](std::size_t gi) {
    const std::string& strategy = strategies[grid[gi].si];
    const double fraction = fractions[grid[gi].fi];
    const bool deterministic = strategy != "random";
    const std::size_t reps = deterministic ? 1 : repeats;

    std::vector<double> accs(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      std::vector<Example> modified;
      modified.reserve(test_examples.size());
      for (std::size_t e = 0; e < test_examples.size(); ++e) {
        const std::uint64_t s =
            mix_seed(mix_seed(mix_seed(seed, grid[gi].si * 1000 + grid[gi].fi), r), e);
        modified.push_back(subsample_example(test_examples[e], strategy, fraction, s));
      }
      accs[r] = evaluate(model, modified).accuracy;
    }
    double mean = 0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(reps);
    double stddev = 0;
    if (reps > 1) {
      double ss = 0;
      for (double a : accs) ss += (a - mean) * (a - mean);
      stddev = std::sqrt(ss / static_cast<double>(reps - 1));
    }
    rows[gi] = {strategy, fraction, mean, stddev, reps};
  });
  return rows;
}

void write_subsample_csv(const std::vector<SubsampleRow>& rows, const std::string& path) {
  CsvWriter csv(path, {"strategy", "fraction", "mean_accuracy", "std_accuracy", "repeats"});
  for (const SubsampleRow& r : rows) {
    csv.row({r.strategy, format_double(r.fraction), format_double(r.mean_accuracy),
             format_double(r.std_accuracy), std::to_string(r.repeats)});
  }
}

SubsampledTrainReport train_subsampled(const ModelSpec& spec, std::uint64_t init_seed,
                                       const FeaturizedDataset& data, const TrainConfig& cfg,
                                       double fraction) {
  if (spec.kind != ModelKind::fst && spec.kind != ModelKind::tst3) {
    throw std::invalid_argument("train_subsampled: needs a cloud-input model");
  }
  SubsampledTrainReport report;

  auto full_model = make_classifier(spec, init_seed);
  TrainConfig full_cfg = cfg;
  full_cfg.subsample_strategy = "none";
  full_cfg.subsample_fraction = 1.0;
  report.full_history = train(*full_model, data, full_cfg);
  report.full_accuracy = evaluate(*full_model, data.test).accuracy;
  report.full_epoch_seconds = report.full_history.mean_epoch_seconds();

  auto sub_model = make_classifier(spec, init_seed);
  TrainConfig sub_cfg = cfg;
  sub_cfg.subsample_strategy = "random";
  sub_cfg.subsample_fraction = fraction;
  report.subsampled_history = train(*sub_model, data, sub_cfg);
  report.subsampled_accuracy = evaluate(*sub_model, data.test).accuracy;
  report.subsampled_epoch_seconds = report.subsampled_history.mean_epoch_seconds();
  return report;
}

}  // namespace pcaudio
