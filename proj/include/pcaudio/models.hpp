#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pcaudio/pointcloud.hpp"
#include "pcaudio/tensor.hpp"

namespace pcaudio {

enum class ModelKind { fst, tst3, fb, cnn };

std::string model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

struct ModelSpec {
  ModelKind kind = ModelKind::fst;
  std::size_t input_dim = 2;  // point dims for clouds, vector length for FB, bins for CNN
  std::size_t hidden = 64;    // D
  std::size_t heads = 4;
  std::size_t inducing = 16;  // k
  std::size_t classes = 10;
  std::vector<std::size_t> fb_hidden = {512, 256};
  std::size_t cnn_channels = 30;
  std::size_t cnn_frames = 10;
  double dropout_p = 0.2;  // FB input dropout
  bool layer_norm = false;
  bool scale_attention = true;

  static ModelSpec fst_toy();
  static ModelSpec fst_full(std::size_t classes = 10);
  static ModelSpec tst3_full(std::size_t classes = 10);
  static ModelSpec fb_toy();
  static ModelSpec fb_full(std::size_t input_len = 1025, std::size_t classes = 10);
  static ModelSpec cnn_full(std::size_t bins = 513, std::size_t classes = 10);

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct Param {
  std::string name;
  Tensor value;
  bool decay = true;  // participates in the l2 penalty
};

// Captures the head-averaged attention matrix of one block.
struct AttentionSink {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> weights;  // row-major [rows x cols]
};

struct ForwardCtx {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  AttentionSink* attention = nullptr;  // filled by the PMA block when set
};

struct FeatVec {
  std::vector<double> values;
};
struct FeatGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major [rows x cols]
};
using Features = std::variant<PointCloud, FeatVec, FeatGrid>;

// ---- Set Transformer blocks ---------------------------------------------

struct MabParams {
  Tensor w_q, w_k, w_v;  // [d_in x d_h]
  Tensor w_o;            // [d_h x d_h]
  Tensor w_ff, b_ff;     // [d_h x d_h], [1 x d_h]
  std::size_t heads = 1;
  bool scale_attention = true;
  bool layer_norm = false;
};

struct IsabParams {
  Tensor inducing;  // [k x d_h]
  MabParams inner, outer;
};

struct PmaParams {
  Tensor seed;  // [1 x d_h]
  MabParams mab;
};

// Multihead cross-attention between X (queries) and Y (keys/values) with a
// residual and a row-wise feed-forward. mask_y flags valid rows of Y.
Tensor mab(const Tensor& x, const Tensor& y, const MabParams& params,
           const std::vector<std::uint8_t>* mask_y = nullptr, AttentionSink* sink = nullptr);

Tensor sab(const Tensor& x, const MabParams& params,
           const std::vector<std::uint8_t>* mask = nullptr);

// MAB(X, MAB(I, X)): attention through k learned inducing points.
Tensor isab(const Tensor& x, const IsabParams& params,
            const std::vector<std::uint8_t>* mask = nullptr);

// Pooling by attention from one learned seed; collapses the cloud to [1 x D].
Tensor pma(const Tensor& x, const PmaParams& params,
           const std::vector<std::uint8_t>* mask = nullptr, AttentionSink* sink = nullptr);

// ---- Classifiers ----------------------------------------------------------

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual ModelKind kind() const = 0;
  virtual const ModelSpec& spec() const = 0;
  // Returns [1 x C] logits. Throws on inputs of the wrong kind or shape.
  virtual Tensor forward(const Features& input, ForwardCtx& ctx) const = 0;
  virtual std::vector<Param>& params() = 0;
  const std::vector<Param>& params() const {
    return const_cast<Classifier*>(this)->params();
  }
};

std::unique_ptr<Classifier> make_classifier(const ModelSpec& spec, std::uint64_t init_seed);

// Row-by-row forward over a padded batch; cloud models only. Returns [B x C].
Tensor batch_logits(const Classifier& model, const CloudBatch& cb, ForwardCtx& ctx);

// PMA attention row (averaged over heads) for one cloud; sums to 1.
std::vector<double> attention_weights(const Classifier& model, const PointCloud& cloud);

// ---- Fixed-vector adapters -------------------------------------------------

// Centered time-domain zero padding up to target_n samples; inputs longer
// than target_n are unsupported.
std::vector<double> pad_window_input(const std::vector<double>& window_samples,
                                     std::size_t target_n = 2048);

// Keeps the listed entries, zeroes the rest.
std::vector<double> zero_out(const std::vector<double>& vec,
                             const std::vector<std::size_t>& keep_indices);

// ---- Counters and checkpoints ----------------------------------------------

std::size_t count_params(const Classifier& model);

// Analytic MACs for one example. cloud_points sizes the synthetic input of
// cloud models (ignored by FB/CNN). training=true includes the backward pass.
std::uint64_t count_macs(const Classifier& model, std::size_t cloud_points,
                         bool training = false);

constexpr int kCheckpointVersion = 1;
void save_checkpoint(const Classifier& model, const std::string& path,
                     const nlohmann::json& extra = nlohmann::json::object());
std::unique_ptr<Classifier> load_checkpoint(const std::string& path,
                                            nlohmann::json* extra = nullptr);

}  // namespace pcaudio
