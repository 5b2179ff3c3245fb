#include "pcaudio/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "pcaudio/rng.hpp"

namespace pcaudio {

namespace {

thread_local bool g_grad_enabled = true;
thread_local OpCounter* g_counter = nullptr;

inline void count_macs(std::uint64_t n) {
  if (g_counter) g_counter->macs += n;
}

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " +
                                shape_str(t.shape()));
  }
}

// Lazily sized gradient buffer; keeps prior contents so gradients
// accumulate across backward calls until explicitly zeroed.
std::vector<real>& grad_buffer(TensorImpl& t) {
  if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), real(0));
  return t.grad;
}

bool wants_grad(const Tensor& t) {
  return t.requires_grad() || t.impl()->node != nullptr;
}

// ---- raw matmul kernels (shared by forward and adjoint passes) ----------

// C[m x n] (+)= A[m x k] * B[k x n]
void mm_nn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate) {
  count_macs(static_cast<std::uint64_t>(m) * k * n);
  if (!accumulate) std::fill(c, c + m * n, real(0));
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const real av = arow[l];
      if (av == real(0)) continue;
      const real* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] (+)= A[m x k] * B^T where B is [n x k]
void mm_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate) {
  count_macs(static_cast<std::uint64_t>(m) * k * n);
  for (std::size_t i = 0; i < m; ++i) {
    const real* arow = a + i * k;
    real* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const real* brow = b + j * k;
      real acc = accumulate ? crow[j] : real(0);
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] = acc;
    }
  }
}

// C[m x n] (+)= A^T * B where A is [k x m], B is [k x n]
void mm_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
           bool accumulate) {
  count_macs(static_cast<std::uint64_t>(m) * k * n);
  if (!accumulate) std::fill(c, c + m * n, real(0));
  for (std::size_t l = 0; l < k; ++l) {
    const real* arow = a + l * m;
    const real* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const real av = arow[i];
      if (av == real(0)) continue;
      real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

OpCounterScope::OpCounterScope(OpCounter& counter) : prev_(g_counter) { g_counter = &counter; }
OpCounterScope::~OpCounterScope() { g_counter = prev_; }

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  return full(std::move(shape), real(0), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, real value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<real> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("Tensor::from_data: shape " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

std::vector<real>& Tensor::grad() { return grad_buffer(*impl_); }

const std::vector<real>& Tensor::grad() const {
  if (impl_->grad.empty()) throw std::runtime_error("Tensor::grad: gradient not populated");
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), real(0)); }

real Tensor::value() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::value: expected scalar, got " + shape_str(shape()));
  }
  return impl_->data[0];
}

real Tensor::at(std::size_t r, std::size_t c) const {
  return impl_->data[r * impl_->shape[1] + c];
}

Tensor make_op_output(std::vector<std::size_t> shape, const char* op, std::vector<Tensor> inputs,
                      std::function<void(TensorImpl&)> backprop) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), real(0));
  impl->shape = std::move(shape);
  bool rg = false;
  if (g_grad_enabled) {
    for (const Tensor& in : inputs) rg = rg || in.requires_grad() || in.impl()->node;
  }
  if (rg) {
    impl->requires_grad = true;
    auto node = std::make_shared<TapeNode>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

// ---- primitives ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Tensor out = make_op_output({m, n}, "matmul", {a, b}, [m, k, n](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    const Tensor& b = o.node->inputs[1];
    if (wants_grad(a)) mm_nt(o.grad.data(), b.data().data(), grad_buffer(*a.impl()).data(), m, n, k, true);
    if (wants_grad(b)) mm_tn(a.data().data(), o.grad.data(), grad_buffer(*b.impl()).data(), k, m, n, true);
  });
  mm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n, false);
  return out;
}

Tensor transpose(const Tensor& a) {
  check_2d(a, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out = make_op_output({c, r}, "transpose", {a}, [r, c](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    auto& ag = grad_buffer(*a.impl());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ag[i * c + j] += o.grad[j * r + i];
  });
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) od[j * r + i] = ad[i * c + j];
  return out;
}

Tensor masked_softmax(const Tensor& x, const std::vector<std::uint8_t>* mask) {
  check_2d(x, "masked_softmax");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (mask && mask->size() != r * c) {
    throw std::invalid_argument("masked_softmax: mask size " + std::to_string(mask->size()) +
                                " does not match " + shape_str(x.shape()));
  }
  count_macs(static_cast<std::uint64_t>(r) * c);
  Tensor out = make_op_output({r, c}, "masked_softmax", {x}, [r, c](TensorImpl& o) {
    const Tensor& x = o.node->inputs[0];
    if (!wants_grad(x)) return;
    count_macs(static_cast<std::uint64_t>(r) * c);
    auto& xg = grad_buffer(*x.impl());
    for (std::size_t i = 0; i < r; ++i) {
      const real* y = o.data.data() + i * c;
      const real* g = o.grad.data() + i * c;
      real dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
      real* xgr = xg.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) xgr[j] += y[j] * (g[j] - dot);
    }
  });
  const auto& xd = x.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const real* row = xd.data() + i * c;
    const std::uint8_t* mrow = mask ? mask->data() + i * c : nullptr;
    real mx = -std::numeric_limits<real>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!mrow || mrow[j]) mx = std::max(mx, row[j]);
    }
    if (mx == -std::numeric_limits<real>::infinity()) {
      throw std::invalid_argument("masked_softmax: fully masked row " + std::to_string(i) +
                                  " (empty point cloud reached attention)");
    }
    real denom = 0;
    real* orow = od.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      if (mrow && !mrow[j]) {
        orow[j] = real(0);
      } else {
        orow[j] = std::exp(row[j] - mx);
        denom += orow[j];
      }
    }
    for (std::size_t j = 0; j < c; ++j) orow[j] /= denom;
    if (mrow) {
      for (std::size_t j = 0; j < c; ++j) {
        if (!mrow[j]) orow[j] = real(0);
      }
    }
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    if (!(a.ndim() == 2 && b.ndim() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1))) {
      throw std::invalid_argument("add: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
    }
  }
  const std::size_t n = a.numel();
  count_macs(n);
  Tensor out = make_op_output(a.shape(), "add", {a, b}, [broadcast](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    const Tensor& b = o.node->inputs[1];
    count_macs(o.data.size());
    if (wants_grad(a)) {
      auto& ag = grad_buffer(*a.impl());
      for (std::size_t i = 0; i < o.grad.size(); ++i) ag[i] += o.grad[i];
    }
    if (wants_grad(b)) {
      auto& bg = grad_buffer(*b.impl());
      if (!broadcast) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) bg[i] += o.grad[i];
      } else {
        const std::size_t c = o.shape[1];
        for (std::size_t i = 0; i < o.grad.size(); ++i) bg[i % c] += o.grad[i];
      }
    }
  });
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  if (!broadcast) {
    for (std::size_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i];
  } else {
    const std::size_t c = a.dim(1);
    for (std::size_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i % c];
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const std::size_t n = a.numel();
  count_macs(n);
  Tensor out = make_op_output(a.shape(), "mul", {a, b}, [](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    const Tensor& b = o.node->inputs[1];
    count_macs(2 * o.data.size());
    if (wants_grad(a)) {
      auto& ag = grad_buffer(*a.impl());
      const auto& bd = b.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) ag[i] += o.grad[i] * bd[i];
    }
    if (wants_grad(b)) {
      auto& bg = grad_buffer(*b.impl());
      const auto& ad = a.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bg[i] += o.grad[i] * ad[i];
    }
  });
  const auto& ad = a.data();
  const auto& bd = b.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < n; ++i) od[i] = ad[i] * bd[i];
  return out;
}

Tensor scale(const Tensor& a, real c) {
  count_macs(a.numel());
  Tensor out = make_op_output(a.shape(), "scale", {a}, [c](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    count_macs(o.data.size());
    auto& ag = grad_buffer(*a.impl());
    for (std::size_t i = 0; i < o.grad.size(); ++i) ag[i] += c * o.grad[i];
  });
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = c * ad[i];
  return out;
}

Tensor leaky_relu(const Tensor& a, real slope) {
  count_macs(a.numel());
  Tensor out = make_op_output(a.shape(), "leaky_relu", {a}, [slope](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    count_macs(o.data.size());
    auto& ag = grad_buffer(*a.impl());
    const auto& ad = a.data();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      ag[i] += o.grad[i] * (ad[i] > real(0) ? real(1) : slope);
  });
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = ad[i] > real(0) ? ad[i] : slope * ad[i];
  return out;
}

Tensor relu(const Tensor& a) { return leaky_relu(a, real(0)); }

Tensor dropout(const Tensor& a, real p, std::uint64_t seed, bool training) {
  if (!(p >= real(0) && p < real(1))) {
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == real(0)) {
    // Identity in eval mode; keep the node so gradients flow through.
    return scale(a, real(1));
  }
  auto keep = std::make_shared<std::vector<real>>(a.numel());
  Rng rng(seed);
  const real inv = real(1) / (real(1) - p);
  for (auto& k : *keep) k = rng.uniform() < p ? real(0) : inv;
  count_macs(a.numel());
  Tensor out = make_op_output(a.shape(), "dropout", {a}, [keep](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    count_macs(o.data.size());
    auto& ag = grad_buffer(*a.impl());
    for (std::size_t i = 0; i < o.grad.size(); ++i) ag[i] += o.grad[i] * (*keep)[i];
  });
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < ad.size(); ++i) od[i] = ad[i] * (*keep)[i];
  return out;
}

Tensor sum(const Tensor& a) {
  count_macs(a.numel());
  Tensor out = make_op_output({1}, "sum", {a}, [](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    count_macs(a.numel());
    auto& ag = grad_buffer(*a.impl());
    const real g = o.grad[0];
    for (auto& v : ag) v += g;
  });
  real acc = 0;
  for (real v : a.data()) acc += v;
  out.data()[0] = acc;
  return out;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  }
  Tensor out = make_op_output(shape, "reshape", {a}, [](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    auto& ag = grad_buffer(*a.impl());
    for (std::size_t i = 0; i < o.grad.size(); ++i) ag[i] += o.grad[i];
  });
  out.data() = a.data();
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  check_2d(a, "slice_cols");
  const std::size_t r = a.dim(0), c = a.dim(1);
  if (!(c0 < c1 && c1 <= c)) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) + ", " +
                                std::to_string(c1) + ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t w = c1 - c0;
  Tensor out = make_op_output({r, w}, "slice_cols", {a}, [r, c, c0, w](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    auto& ag = grad_buffer(*a.impl());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ag[i * c + c0 + j] += o.grad[i * w + j];
  });
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) od[i * w + j] = ad[i * c + c0 + j];
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input list");
  const std::size_t r = parts[0].dim(0);
  std::size_t c = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_cols");
    if (p.dim(0) != r) {
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    }
    c += p.dim(1);
  }
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) widths.push_back(p.dim(1));
  Tensor out = make_op_output({r, c}, "concat_cols", parts, [r, c, widths](TensorImpl& o) {
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < o.node->inputs.size(); ++pi) {
      const Tensor& p = o.node->inputs[pi];
      const std::size_t w = widths[pi];
      if (wants_grad(p)) {
        auto& pg = grad_buffer(*p.impl());
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) pg[i * w + j] += o.grad[i * c + offset + j];
      }
      offset += w;
    }
  });
  auto& od = out.data();
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.dim(1);
    const auto& pd = p.data();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) od[i * c + offset + j] = pd[i * w + j];
    offset += w;
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input list");
  const std::size_t c = parts[0].dim(1);
  std::size_t r = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_rows");
    if (p.dim(1) != c) {
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(p.shape()));
    }
    r += p.dim(0);
  }
  Tensor out = make_op_output({r, c}, "concat_rows", parts, [c](TensorImpl& o) {
    std::size_t row = 0;
    for (const Tensor& p : o.node->inputs) {
      const std::size_t pr = p.dim(0);
      if (wants_grad(p)) {
        auto& pg = grad_buffer(*p.impl());
        for (std::size_t i = 0; i < pr * c; ++i) pg[i] += o.grad[row * c + i];
      }
      row += pr;
    }
  });
  auto& od = out.data();
  std::size_t row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data().begin(), p.data().end(), od.begin() + row * c);
    row += p.dim(0);
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& a, real eps) {
  check_2d(a, "layer_norm_rows");
  const std::size_t r = a.dim(0), c = a.dim(1);
  auto inv_std = std::make_shared<std::vector<real>>(r);
  count_macs(static_cast<std::uint64_t>(r) * c);
  Tensor out = make_op_output({r, c}, "layer_norm_rows", {a}, [r, c, inv_std](TensorImpl& o) {
    const Tensor& a = o.node->inputs[0];
    if (!wants_grad(a)) return;
    count_macs(static_cast<std::uint64_t>(r) * c);
    auto& ag = grad_buffer(*a.impl());
    for (std::size_t i = 0; i < r; ++i) {
      const real* y = o.data.data() + i * c;
      const real* g = o.grad.data() + i * c;
      real gsum = 0, gysum = 0;
      for (std::size_t j = 0; j < c; ++j) {
        gsum += g[j];
        gysum += g[j] * y[j];
      }
      const real is = (*inv_std)[i];
      real* agr = ag.data() + i * c;
      const real n = static_cast<real>(c);
      for (std::size_t j = 0; j < c; ++j)
        agr[j] += is * (g[j] - gsum / n - y[j] * gysum / n);
    }
  });
  const auto& ad = a.data();
  auto& od = out.data();
  for (std::size_t i = 0; i < r; ++i) {
    const real* row = ad.data() + i * c;
    real mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<real>(c);
    real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<real>(c);
    const real is = real(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    real* orow = od.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) orow[j] = (row[j] - mean) * is;
  }
  return out;
}

Tensor conv_time(const Tensor& input, const Tensor& kernels, const Tensor* bias) {
  if (input.ndim() != 3) {
    throw std::invalid_argument("conv_time: input must be [C_in x T x F], got " +
                                shape_str(input.shape()));
  }
  if (kernels.ndim() != 4 || kernels.dim(3) != 1) {
    throw std::invalid_argument("conv_time: kernels must be [C_out x C_in x K x 1], got " +
                                shape_str(kernels.shape()));
  }
  const std::size_t cin = input.dim(0), t = input.dim(1), f = input.dim(2);
  const std::size_t cout = kernels.dim(0), kt = kernels.dim(2);
  if (kernels.dim(1) != cin) {
    throw std::invalid_argument("conv_time: channel mismatch " + shape_str(input.shape()) +
                                " vs " + shape_str(kernels.shape()));
  }
  if (t < kt) {
    throw std::invalid_argument("conv_time: input too short, T=" + std::to_string(t) +
                                " < kernel " + std::to_string(kt));
  }
  if (bias && bias->numel() != cout) {
    throw std::invalid_argument("conv_time: bias size " + std::to_string(bias->numel()) +
                                " != C_out " + std::to_string(cout));
  }
  const std::size_t tout = t - kt + 1;
  count_macs(static_cast<std::uint64_t>(cout) * cin * kt * tout * f);

  std::vector<Tensor> inputs = {input, kernels};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  Tensor out = make_op_output(
      {cout, tout, f}, "conv_time", std::move(inputs),
      [cin, t, f, cout, kt, tout, has_bias](TensorImpl& o) {
        const Tensor& x = o.node->inputs[0];
        const Tensor& k = o.node->inputs[1];
        count_macs(2ULL * cout * cin * kt * tout * f);
        if (wants_grad(x)) {
          auto& xg = grad_buffer(*x.impl());
          const auto& kd = k.data();
          for (std::size_t o_c = 0; o_c < cout; ++o_c)
            for (std::size_t i_c = 0; i_c < cin; ++i_c)
              for (std::size_t dt = 0; dt < kt; ++dt) {
                const real kv = kd[((o_c * cin + i_c) * kt + dt)];
                if (kv == real(0)) continue;
                for (std::size_t ot = 0; ot < tout; ++ot) {
                  const real* gr = o.grad.data() + (o_c * tout + ot) * f;
                  real* xr = xg.data() + (i_c * t + ot + dt) * f;
                  for (std::size_t j = 0; j < f; ++j) xr[j] += kv * gr[j];
                }
              }
        }
        if (wants_grad(k)) {
          auto& kg = grad_buffer(*k.impl());
          const auto& xd = x.data();
          for (std::size_t o_c = 0; o_c < cout; ++o_c)
            for (std::size_t i_c = 0; i_c < cin; ++i_c)
              for (std::size_t dt = 0; dt < kt; ++dt) {
                real acc = 0;
                for (std::size_t ot = 0; ot < tout; ++ot) {
                  const real* gr = o.grad.data() + (o_c * tout + ot) * f;
                  const real* xr = xd.data() + (i_c * t + ot + dt) * f;
                  for (std::size_t j = 0; j < f; ++j) acc += gr[j] * xr[j];
                }
                kg[(o_c * cin + i_c) * kt + dt] += acc;
              }
        }
        if (has_bias) {
          const Tensor& b = o.node->inputs[2];
          if (wants_grad(b)) {
            auto& bg = grad_buffer(*b.impl());
            for (std::size_t o_c = 0; o_c < cout; ++o_c) {
              real acc = 0;
              const real* gr = o.grad.data() + o_c * tout * f;
              for (std::size_t i = 0; i < tout * f; ++i) acc += gr[i];
              bg[o_c] += acc;
            }
          }
        }
      });

  const auto& xd = input.data();
  const auto& kd = kernels.data();
  auto& od = out.data();
  for (std::size_t o_c = 0; o_c < cout; ++o_c) {
    const real bv = bias ? bias->data()[o_c] : real(0);
    for (std::size_t ot = 0; ot < tout; ++ot) {
      real* orow = od.data() + (o_c * tout + ot) * f;
      std::fill(orow, orow + f, bv);
      for (std::size_t i_c = 0; i_c < cin; ++i_c)
        for (std::size_t dt = 0; dt < kt; ++dt) {
          const real kv = kd[(o_c * cin + i_c) * kt + dt];
          if (kv == real(0)) continue;
          const real* xr = xd.data() + (i_c * t + ot + dt) * f;
          for (std::size_t j = 0; j < f; ++j) orow[j] += kv * xr[j];
        }
    }
  }
  return out;
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
  check_2d(logits, "cross_entropy_logits");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  if (labels.size() != b) {
    throw std::invalid_argument("cross_entropy_logits: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(b) + " rows");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= c) {
      throw std::invalid_argument("cross_entropy_logits: label " + std::to_string(l) +
                                  " out of range for " + std::to_string(c) + " classes");
    }
  }
  auto labs = std::make_shared<std::vector<int>>(labels);
  count_macs(static_cast<std::uint64_t>(b) * c);
  Tensor out = make_op_output({1}, "cross_entropy", {logits}, [b, c, labs](TensorImpl& o) {
    const Tensor& x = o.node->inputs[0];
    if (!wants_grad(x)) return;
    count_macs(static_cast<std::uint64_t>(b) * c);
    auto& xg = grad_buffer(*x.impl());
    const auto& xd = x.data();
    const real g = o.grad[0] / static_cast<real>(b);
    for (std::size_t i = 0; i < b; ++i) {
      const real* row = xd.data() + i * c;
      real mx = row[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      real denom = 0;
      for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
      real* gr = xg.data() + i * c;
      for (std::size_t j = 0; j < c; ++j) {
        const real p = std::exp(row[j] - mx) / denom;
        gr[j] += g * (p - (static_cast<std::size_t>((*labs)[i]) == j ? real(1) : real(0)));
      }
    }
  });
  const auto& xd = logits.data();
  real total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const real* row = xd.data() + i * c;
    real mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    real denom = 0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    total += std::log(denom) + mx - row[labels[i]];
  }
  out.data()[0] = total / static_cast<real>(b);
  return out;
}

// ---- backward -----------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.impl()->node && !loss.requires_grad()) return;

  // Iterative DFS topological sort over tensors that carry nodes.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::unordered_map<TensorImpl*, std::shared_ptr<TensorImpl>> keep_alive;
  struct Frame {
    TensorImpl* t;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.impl(), 0});
  keep_alive[loss.impl()] = loss.shared_impl();
  while (!stack.empty()) {
    Frame& fr = stack.back();
    if (!fr.t->node || fr.next_input >= fr.t->node->inputs.size()) {
      if (fr.t->node && !visited.count(fr.t)) order.push_back(fr.t);
      visited.insert(fr.t);
      stack.pop_back();
      continue;
    }
    const Tensor& in = fr.t->node->inputs[fr.next_input++];
    if (!visited.count(in.impl()) && in.impl()->node) {
      // Defer marking visited until children done; guard against revisit.
      bool on_stack = false;
      for (const Frame& f : stack) {
        if (f.t == in.impl()) {
          on_stack = true;
          break;
        }
      }
      if (!on_stack) {
        stack.push_back({in.impl(), 0});
        keep_alive[in.impl()] = in.shared_impl();
      }
    }
  }

  for (TensorImpl* t : order) {
    if (t->node->consumed) {
      throw std::runtime_error(std::string("backward: tape already consumed at op '") +
                               t->node->op + "'");
    }
  }

  grad_buffer(*loss.impl());
  loss.impl()->grad[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* t = *it;
    grad_buffer(*t);
    t->node->backprop(*t);
    t->node->consumed = true;
  }
}

}  // namespace pcaudio
