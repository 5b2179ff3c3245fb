#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pcaudio {

#ifdef PCAUDIO_FLOAT32
using real = float;
#else
using real = double;
#endif

class Tensor;

// One recorded primitive. A backward pass walks these in reverse
// topological order and replays the adjoints.
struct TapeNode {
  const char* op = "";
  std::vector<Tensor> inputs;
  std::function<void(struct TensorImpl&)> backprop;
  bool consumed = false;
};

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty until backward reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;  // null for leaves

  std::size_t numel() const { return data.size(); }
};

// Dense row-major real array participating in reverse-mode
// differentiation. Cheap handle; copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, real value, bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<real> data,
                          bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t ndim() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }

  std::vector<real>& data() { return impl_->data; }
  const std::vector<real>& data() const { return impl_->data; }
  bool requires_grad() const { return impl_->requires_grad; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<real>& grad();
  const std::vector<real>& grad() const;
  void zero_grad();

  // Scalar value; throws unless numel() == 1.
  real value() const;
  real at(std::size_t i) const { return impl_->data[i]; }
  real at(std::size_t r, std::size_t c) const;

  TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<TensorImpl> shared_impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_op_output(std::vector<std::size_t> shape, const char* op,
                               std::vector<Tensor> inputs,
                               std::function<void(TensorImpl&)> backprop);
};

// Thread-local switch disabling tape recording (evaluation mode).
bool grad_enabled();
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Analytic multiply-accumulate counter. While a scope is active every
// primitive adds its MAC cost (matmul m*k*n, conv full product,
// elementwise one per element) to the counter.
struct OpCounter {
  std::uint64_t macs = 0;
};
struct OpCounterScope {
  explicit OpCounterScope(OpCounter& counter);
  ~OpCounterScope();
  OpCounterScope(const OpCounterScope&) = delete;
  OpCounterScope& operator=(const OpCounterScope&) = delete;

 private:
  OpCounter* prev_;
};

// ---- Primitives --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Row-wise softmax over an [r x c] matrix. mask (if given) is row-major
// [r x c], nonzero = keep; masked entries are exactly 0 in the output and
// every row must keep at least one entry.
Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>* mask = nullptr);

Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b = [1 x c] row broadcast
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& a, real c);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, real slope = 0.01);
// Inverted dropout: zeroes entries with probability p and rescales
// survivors by 1/(1-p) when training; identity in eval mode.
Tensor dropout(const Tensor& a, real p, std::uint64_t seed, bool training);

Tensor sum(const Tensor& a);  // scalar
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);

// Parameter-free row normalization: (x - mean) / sqrt(var + eps).
Tensor layer_norm_rows(const Tensor& a, real eps = 1e-5);

// Valid correlation along time only. input [C_in x T x F], kernels
// [C_out x C_in x K x 1], optional bias [C_out] -> [C_out x (T-K+1) x F].
Tensor conv_time(const Tensor& input, const Tensor& kernels, const Tensor* bias = nullptr);

// Mean over rows of cross-entropy between logits [B x C] and integer labels.
Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels);

// Reverse pass from a scalar. Populates grad on every requires_grad
// ancestor. Replaying an already-consumed tape is an error.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace pcaudio
