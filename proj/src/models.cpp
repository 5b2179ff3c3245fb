#include "pcaudio/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pcaudio/rng.hpp"

namespace pcaudio {

namespace {

Tensor tensor_from_doubles(std::vector<std::size_t> shape, const double* values,
                           std::size_t count) {
  std::vector<real> data(count);
  for (std::size_t i = 0; i < count; ++i) data[i] = static_cast<real>(values[i]);
  return Tensor::from_data(std::move(shape), std::move(data));
}

// Registers parameters with the owning classifier as they are created.
struct ParamBuilder {
  std::vector<Param>& out;
  Rng& rng;

  Tensor xavier(const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor t = Tensor::zeros({rows, cols}, true);
    const real std_dev = std::sqrt(real(2) / static_cast<real>(rows + cols));
    for (auto& v : t.data()) v = static_cast<real>(rng.normal()) * std_dev;
    out.push_back({name, t, true});
    return t;
  }
  Tensor zeros(const std::string& name, std::vector<std::size_t> shape, bool decay) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    out.push_back({name, t, decay});
    return t;
  }
  // Unit-scale rows acting as learned pseudo-points (inducing sets, PMA seed).
  Tensor gaussian(const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor t = Tensor::zeros({rows, cols}, true);
    for (auto& v : t.data()) v = static_cast<real>(rng.normal());
    out.push_back({name, t, false});
    return t;
  }
};

MabParams make_mab(ParamBuilder& pb, const std::string& prefix, std::size_t d_in,
                   std::size_t d_h, const ModelSpec& spec) {
  MabParams p;
  p.w_q = pb.xavier(prefix + ".wq", d_in, d_h);
  p.w_k = pb.xavier(prefix + ".wk", d_in, d_h);
  p.w_v = pb.xavier(prefix + ".wv", d_in, d_h);
  p.w_o = pb.xavier(prefix + ".wo", d_h, d_h);
  p.w_ff = pb.xavier(prefix + ".wff", d_h, d_h);
  p.b_ff = pb.zeros(prefix + ".bff", {1, d_h}, false);
  p.heads = spec.heads;
  p.scale_attention = spec.scale_attention;
  p.layer_norm = spec.layer_norm;
  return p;
}

IsabParams make_isab(ParamBuilder& pb, const std::string& prefix, std::size_t d_h,
                     const ModelSpec& spec) {
  IsabParams p;
  p.inducing = pb.gaussian(prefix + ".inducing", spec.inducing, d_h);
  p.inner = make_mab(pb, prefix + ".inner", d_h, d_h, spec);
  p.outer = make_mab(pb, prefix + ".outer", d_h, d_h, spec);
  return p;
}

}  // namespace

std::string model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::fst: return "fst";
    case ModelKind::tst3: return "tst3";
    case ModelKind::fb: return "fb";
    case ModelKind::cnn: return "cnn";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "fst") return ModelKind::fst;
  if (name == "tst3") return ModelKind::tst3;
  if (name == "fb") return ModelKind::fb;
  if (name == "cnn") return ModelKind::cnn;
  throw std::invalid_argument("unknown model kind: " + name);
}

ModelSpec ModelSpec::fst_toy() {
  ModelSpec s;
  s.kind = ModelKind::fst;
  s.input_dim = 2;
  s.hidden = 2;
  s.heads = 1;
  s.inducing = 16;
  s.classes = 2;
  return s;
}

ModelSpec ModelSpec::fst_full(std::size_t classes) {
  ModelSpec s;
  s.kind = ModelKind::fst;
  s.input_dim = 2;
  s.hidden = 64;
  s.heads = 4;
  s.inducing = 16;
  s.classes = classes;
  return s;
}

ModelSpec ModelSpec::tst3_full(std::size_t classes) {
  ModelSpec s = fst_full(classes);
  s.kind = ModelKind::tst3;
  s.input_dim = 3;
  return s;
}

ModelSpec ModelSpec::fb_toy() {
  ModelSpec s;
  s.kind = ModelKind::fb;
  s.input_dim = 64;
  s.fb_hidden = {8};
  s.classes = 2;
  s.dropout_p = 0.0;
  return s;
}

ModelSpec ModelSpec::fb_full(std::size_t input_len, std::size_t classes) {
  ModelSpec s;
  s.kind = ModelKind::fb;
  s.input_dim = input_len;
  s.fb_hidden = {512, 256};
  s.classes = classes;
  s.dropout_p = 0.2;
  return s;
}

ModelSpec ModelSpec::cnn_full(std::size_t bins, std::size_t classes) {
  ModelSpec s;
  s.kind = ModelKind::cnn;
  s.input_dim = bins;
  s.cnn_channels = 30;
  s.cnn_frames = 10;
  s.classes = classes;
  return s;
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = model_kind_name(kind);
  j["input_dim"] = input_dim;
  j["hidden"] = hidden;
  j["heads"] = heads;
  j["inducing"] = inducing;
  j["classes"] = classes;
  j["fb_hidden"] = fb_hidden;
  j["cnn_channels"] = cnn_channels;
  j["cnn_frames"] = cnn_frames;
  j["dropout_p"] = dropout_p;
  j["layer_norm"] = layer_norm;
  j["scale_attention"] = scale_attention;
  return j;
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.kind = model_kind_from_name(j.at("kind").get<std::string>());
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::size_t>();
  s.heads = j.at("heads").get<std::size_t>();
  s.inducing = j.at("inducing").get<std::size_t>();
  s.classes = j.at("classes").get<std::size_t>();
  s.fb_hidden = j.at("fb_hidden").get<std::vector<std::size_t>>();
  s.cnn_channels = j.at("cnn_channels").get<std::size_t>();
  s.cnn_frames = j.at("cnn_frames").get<std::size_t>();
  s.dropout_p = j.at("dropout_p").get<double>();
  s.layer_norm = j.at("layer_norm").get<bool>();
  s.scale_attention = j.at("scale_attention").get<bool>();
  return s;
}

// ---- attention blocks -----------------------------------------------------

Tensor mab(const Tensor& x, const Tensor& y, const MabParams& params,
           const std::vector<std::uint8_t>* mask_y, AttentionSink* sink) {
  const std::size_t n = x.dim(0), m = y.dim(0);
  if (n == 0 || m == 0) throw std::invalid_argument("mab: empty point set");
  const std::size_t d_h = params.w_q.dim(1);
  const std::size_t heads = params.heads;
  if (d_h % heads != 0) {
    throw std::invalid_argument("mab: heads " + std::to_string(heads) +
                                " must divide hidden dim " + std::to_string(d_h));
  }
  if (mask_y && mask_y->size() != m) {
    throw std::invalid_argument("mab: mask size " + std::to_string(mask_y->size()) +
                                " != key count " + std::to_string(m));
  }
  const std::size_t d_head = d_h / heads;

  Tensor q = matmul(x, params.w_q);
  Tensor k = matmul(y, params.w_k);
  Tensor v = matmul(y, params.w_v);

  // Per-key mask expanded across query rows.
  std::vector<std::uint8_t> expanded;
  const std::vector<std::uint8_t>* mask_ptr = nullptr;
  if (mask_y) {
    expanded.resize(n * m);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(mask_y->begin(), mask_y->end(), expanded.begin() + static_cast<long>(i * m));
    mask_ptr = &expanded;
  }

  if (sink) {
    sink->rows = n;
    sink->cols = m;
    sink->weights.assign(n * m, 0.0);
  }

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * d_head, (h + 1) * d_head);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * d_head, (h + 1) * d_head);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * d_head, (h + 1) * d_head);
    Tensor scores = matmul(qh, transpose(kh));
    if (params.scale_attention) {
      scores = scale(scores, real(1) / std::sqrt(static_cast<real>(d_head)));
    }
    Tensor attn = masked_softmax(scores, mask_ptr);
    if (sink) {
      for (std::size_t i = 0; i < n * m; ++i)
        sink->weights[i] += static_cast<double>(attn.data()[i]) / static_cast<double>(heads);
    }
    head_outputs.push_back(matmul(attn, vh));
  }
  Tensor attn_out = heads == 1 ? head_outputs[0] : concat_cols(head_outputs);
  attn_out = matmul(attn_out, params.w_o);

  // Residual; when the query dim differs from d_h the query projection
  // stands in for X.
  Tensor residual = x.dim(1) == d_h ? x : q;
  Tensor h = add(residual, attn_out);
  if (params.layer_norm) h = layer_norm_rows(h);
  Tensor ff = add(matmul(h, params.w_ff), params.b_ff);
  Tensor out = add(h, leaky_relu(ff, real(0.01)));
  if (params.layer_norm) out = layer_norm_rows(out);
  return out;
}

Tensor sab(const Tensor& x, const MabParams& params, const std::vector<std::uint8_t>* mask) {
  return mab(x, x, params, mask);
}

Tensor isab(const Tensor& x, const IsabParams& params, const std::vector<std::uint8_t>* mask) {
  Tensor h = mab(params.inducing, x, params.inner, mask);
  return mab(x, h, params.outer, nullptr);
}

Tensor pma(const Tensor& x, const PmaParams& params, const std::vector<std::uint8_t>* mask,
           AttentionSink* sink) {
  return mab(params.seed, x, params.mab, mask, sink);
}

// ---- classifiers ------------------------------------------------------------

namespace {

class SetTransformerClassifier final : public Classifier {
 public:
  SetTransformerClassifier(const ModelSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    if (spec.input_dim != 2 && spec.input_dim != 3) {
      throw std::invalid_argument("set transformer: input_dim must be 2 or 3");
    }
    if (spec.hidden % spec.heads != 0) {
      throw std::invalid_argument("set transformer: heads must divide hidden dim");
    }
    if (spec.inducing < 1) throw std::invalid_argument("set transformer: inducing must be >= 1");
    Rng rng(init_seed);
    ParamBuilder pb{params_, rng};
    w_embed_ = pb.xavier("embed.w", spec.input_dim, spec.hidden);
    b_embed_ = pb.zeros("embed.b", {1, spec.hidden}, false);
    isab1_ = make_isab(pb, "isab1", spec.hidden, spec);
    isab2_ = make_isab(pb, "isab2", spec.hidden, spec);
    pma_.seed = pb.gaussian("pma.seed", 1, spec.hidden);
    pma_.mab = make_mab(pb, "pma", spec.hidden, spec.hidden, spec);
    w_out_ = pb.zeros("classify.w", {spec.hidden, spec.classes}, true);
    b_out_ = pb.zeros("classify.b", {1, spec.classes}, false);
  }

  ModelKind kind() const override { return spec_.kind; }
  const ModelSpec& spec() const override { return spec_; }
  std::vector<Param>& params() override { return params_; }

  Tensor forward(const Features& input, ForwardCtx& ctx) const override {
    const PointCloud* cloud = std::get_if<PointCloud>(&input);
    if (!cloud) {
      throw std::invalid_argument("set transformer expects a point cloud input");
    }
    if (cloud->size() == 0) throw std::invalid_argument("set transformer: empty point cloud");
    if (static_cast<std::size_t>(cloud->dims) != spec_.input_dim) {
      throw std::invalid_argument("set transformer: " + std::to_string(cloud->dims) +
                                  "-D points fed to a " + std::to_string(spec_.input_dim) +
                                  "-D model");
    }
    Tensor coords =
        tensor_from_doubles({cloud->size(), spec_.input_dim}, cloud->coords.data(),
                            cloud->coords.size());
    return forward_points(coords, nullptr, ctx);
  }

  Tensor forward_points(const Tensor& coords, const std::vector<std::uint8_t>* mask,
                        ForwardCtx& ctx) const {
    Tensor h = add(matmul(coords, w_embed_), b_embed_);
    h = isab(h, isab1_, mask);
    h = isab(h, isab2_, mask);
    Tensor pooled = pma(h, pma_, mask, ctx.attention);
    return add(matmul(pooled, w_out_), b_out_);
  }

 private:
  ModelSpec spec_;
  std::vector<Param> params_;
  Tensor w_embed_, b_embed_;
  IsabParams isab1_, isab2_;
  PmaParams pma_;
  Tensor w_out_, b_out_;
};

class FeedForwardClassifier final : public Classifier {
 public:
  FeedForwardClassifier(const ModelSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    if (spec.fb_hidden.empty()) throw std::invalid_argument("fb: no hidden layers given");
    Rng rng(init_seed);
    ParamBuilder pb{params_, rng};
    std::size_t prev = spec.input_dim;
    for (std::size_t i = 0; i < spec.fb_hidden.size(); ++i) {
      const std::string prefix = "fc" + std::to_string(i + 1);
      weights_.push_back(pb.xavier(prefix + ".w", prev, spec.fb_hidden[i]));
      biases_.push_back(pb.zeros(prefix + ".b", {1, spec.fb_hidden[i]}, false));
      prev = spec.fb_hidden[i];
    }
    w_out_ = pb.zeros("classify.w", {prev, spec.classes}, true);
    b_out_ = pb.zeros("classify.b", {1, spec.classes}, false);
  }

  ModelKind kind() const override { return ModelKind::fb; }
  const ModelSpec& spec() const override { return spec_; }
  std::vector<Param>& params() override { return params_; }

  Tensor forward(const Features& input, ForwardCtx& ctx) const override {
    const FeatVec* vec = std::get_if<FeatVec>(&input);
    if (!vec) throw std::invalid_argument("fb expects a fixed-length vector input");
    if (vec->values.size() != spec_.input_dim) {
      throw std::invalid_argument("fb: input length " + std::to_string(vec->values.size()) +
                                  " != expected " + std::to_string(spec_.input_dim));
    }
    Tensor h = tensor_from_doubles({1, spec_.input_dim}, vec->values.data(), vec->values.size());
    if (spec_.dropout_p > 0) {
      h = dropout(h, static_cast<real>(spec_.dropout_p), mix_seed(ctx.dropout_seed, 0xfb),
                  ctx.training);
    }
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      h = leaky_relu(add(matmul(h, weights_[i]), biases_[i]), real(0.01));
    }
    return add(matmul(h, w_out_), b_out_);
  }

 private:
  ModelSpec spec_;
  std::vector<Param> params_;
  std::vector<Tensor> weights_, biases_;
  Tensor w_out_, b_out_;
};

class ConvClassifier final : public Classifier {
 public:
  ConvClassifier(const ModelSpec& spec, std::uint64_t init_seed) : spec_(spec) {
    Rng rng(init_seed);
    ParamBuilder pb{params_, rng};
    kernels_ = Tensor::zeros({spec.cnn_channels, 1, spec.cnn_frames, 1}, true);
    const real std_dev =
        std::sqrt(real(2) / static_cast<real>(spec.cnn_frames + spec.cnn_channels));
    for (auto& v : kernels_.data()) v = static_cast<real>(rng.normal()) * std_dev;
    params_.push_back({"conv.w", kernels_, true});
    conv_bias_ = pb.zeros("conv.b", {spec.cnn_channels}, false);
    w_out_ = pb.zeros("classify.w", {spec.cnn_channels * spec.input_dim, spec.classes}, true);
    b_out_ = pb.zeros("classify.b", {1, spec.classes}, false);
  }

  ModelKind kind() const override { return ModelKind::cnn; }
  const ModelSpec& spec() const override { return spec_; }
  std::vector<Param>& params() override { return params_; }

  Tensor forward(const Features& input, ForwardCtx&) const override {
    const FeatGrid* grid = std::get_if<FeatGrid>(&input);
    if (!grid) throw std::invalid_argument("cnn expects a [frames x bins] grid input");
    if (grid->rows != spec_.cnn_frames || grid->cols != spec_.input_dim) {
      throw std::invalid_argument(
          "cnn: grid " + std::to_string(grid->rows) + "x" + std::to_string(grid->cols) +
          " != expected " + std::to_string(spec_.cnn_frames) + "x" +
          std::to_string(spec_.input_dim));
    }
    Tensor x = tensor_from_doubles({1, grid->rows, grid->cols}, grid->values.data(),
                                   grid->values.size());
    Tensor h = leaky_relu(conv_time(x, kernels_, &conv_bias_), real(0.01));
    h = reshape(h, {1, spec_.cnn_channels * spec_.input_dim});
    return add(matmul(h, w_out_), b_out_);
  }

 private:
  ModelSpec spec_;
  std::vector<Param> params_;
  Tensor kernels_, conv_bias_, w_out_, b_out_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const ModelSpec& spec, std::uint64_t init_seed) {
  if (spec.classes < 2) throw std::invalid_argument("model: need at least 2 classes");
  switch (spec.kind) {
    case ModelKind::fst:
    case ModelKind::tst3:
      return std::make_unique<SetTransformerClassifier>(spec, init_seed);
    case ModelKind::fb:
      return std::make_unique<FeedForwardClassifier>(spec, init_seed);
    case ModelKind::cnn:
      return std::make_unique<ConvClassifier>(spec, init_seed);
  }
  throw std::invalid_argument("model: unknown kind");
}

Tensor batch_logits(const Classifier& model, const CloudBatch& cb, ForwardCtx& ctx) {
  const auto* st = dynamic_cast<const SetTransformerClassifier*>(&model);
  if (!st) throw std::invalid_argument("batch_logits: model does not accept point clouds");
  std::vector<Tensor> rows;
  rows.reserve(cb.batch);
  for (std::size_t b = 0; b < cb.batch; ++b) {
    Tensor coords = tensor_from_doubles({cb.n_max, static_cast<std::size_t>(cb.dims)},
                                        cb.row_coords(b), cb.n_max * cb.dims);
    std::vector<std::uint8_t> mask(cb.row_mask(b), cb.row_mask(b) + cb.n_max);
    rows.push_back(st->forward_points(coords, &mask, ctx));
  }
  return concat_rows(rows);
}

std::vector<double> attention_weights(const Classifier& model, const PointCloud& cloud) {
  if (cloud.size() == 0) throw std::invalid_argument("attention_weights: empty point cloud");
  NoGradGuard ng;
  AttentionSink sink;
  ForwardCtx ctx;
  ctx.attention = &sink;
  model.forward(Features{cloud}, ctx);
  if (sink.rows != 1) throw std::runtime_error("attention_weights: no PMA attention captured");
  return sink.weights;
}

std::vector<double> pad_window_input(const std::vector<double>& window_samples,
                                     std::size_t target_n) {
  if (window_samples.size() > target_n) {
    throw std::invalid_argument("pad_window_input: window of " +
                                std::to_string(window_samples.size()) +
                                " samples exceeds the supported size " +
                                std::to_string(target_n));
  }
  std::vector<double> out(target_n, 0.0);
  const std::size_t offset = (target_n - window_samples.size()) / 2;
  std::copy(window_samples.begin(), window_samples.end(), out.begin() + static_cast<long>(offset));
  return out;
}

std::vector<double> zero_out(const std::vector<double>& vec,
                             const std::vector<std::size_t>& keep_indices) {
  std::vector<double> out(vec.size(), 0.0);
  for (std::size_t i : keep_indices) {
    if (i >= vec.size()) {
      throw std::invalid_argument("zero_out: index " + std::to_string(i) +
                                  " out of range for length " + std::to_string(vec.size()));
    }
    out[i] = vec[i];
  }
  return out;
}

std::size_t count_params(const Classifier& model) {
  std::size_t total = 0;
  for (const Param& p : model.params()) total += p.value.numel();
  return total;
}

std::uint64_t count_macs(const Classifier& model, std::size_t cloud_points, bool training) {
  Features input;
  const ModelSpec& spec = model.spec();
  switch (spec.kind) {
    case ModelKind::fst:
    case ModelKind::tst3: {
      PointCloud cloud;
      cloud.dims = static_cast<int>(spec.input_dim);
      cloud.coords.assign(cloud_points * spec.input_dim, 0.1);
      input = cloud;
      break;
    }
    case ModelKind::fb: {
      FeatVec v;
      v.values.assign(spec.input_dim, 0.1);
      input = v;
      break;
    }
    case ModelKind::cnn: {
      FeatGrid g;
      g.rows = spec.cnn_frames;
      g.cols = spec.input_dim;
      g.values.assign(g.rows * g.cols, 0.1);
      input = g;
      break;
    }
  }

  OpCounter counter;
  ForwardCtx ctx;
  ctx.training = training;
  if (!training) {
    NoGradGuard ng;
    OpCounterScope scope(counter);
    model.forward(input, ctx);
  } else {
    OpCounterScope scope(counter);
    Tensor logits = model.forward(input, ctx);
    Tensor loss = cross_entropy_logits(logits, {0});
    backward(loss);
    for (const Param& p : model.params()) p.value.impl()->grad.clear();
  }
  return counter.macs;
}

void save_checkpoint(const Classifier& model, const std::string& path,
                     const nlohmann::json& extra) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["spec"] = model.spec().to_json();
  nlohmann::json params = nlohmann::json::object();
  for (const Param& p : model.params()) {
    nlohmann::json entry;
    entry["shape"] = p.value.shape();
    entry["data"] = std::vector<double>(p.value.data().begin(), p.value.data().end());
    params[p.name] = std::move(entry);
  }
  j["params"] = std::move(params);
  if (!extra.empty()) j["extra"] = extra;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
}

std::unique_ptr<Classifier> load_checkpoint(const std::string& path, nlohmann::json* extra) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: format version " + std::to_string(version) +
                             " != supported " + std::to_string(kCheckpointVersion));
  }
  ModelSpec spec = ModelSpec::from_json(j.at("spec"));
  std::unique_ptr<Classifier> model = make_classifier(spec, 0);
  const nlohmann::json& params = j.at("params");
  for (Param& p : model->params()) {
    if (!params.contains(p.name)) {
      throw std::runtime_error("load_checkpoint: missing parameter " + p.name);
    }
    const auto data = params.at(p.name).at("data").get<std::vector<double>>();
    if (data.size() != p.value.numel()) {
      throw std::runtime_error("load_checkpoint: size mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < data.size(); ++i)
      p.value.data()[i] = static_cast<real>(data[i]);
  }
  if (extra) *extra = j.contains("extra") ? j.at("extra") : nlohmann::json::object();
  return model;
}

}  // namespace pcaudio
