#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "pcaudio/grad_check.hpp"
#include "pcaudio/models.hpp"
#include "pcaudio/rng.hpp"
#include "test_util.hpp"

using namespace pcaudio;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scl = 0.5) {
  Tensor t = Tensor::zeros({r, c}, true);
  for (auto& v : t.data()) v = rng.normal() * scl;
  return t;
}

MabParams make_test_mab(std::size_t d_in, std::size_t d_h, std::size_t heads, Rng& rng) {
  MabParams p;
  p.w_q = random_matrix(d_in, d_h, rng);
  p.w_k = random_matrix(d_in, d_h, rng);
  p.w_v = random_matrix(d_in, d_h, rng);
  p.w_o = random_matrix(d_h, d_h, rng);
  p.w_ff = random_matrix(d_h, d_h, rng);
  p.b_ff = random_matrix(1, d_h, rng);
  p.heads = heads;
  return p;
}

std::vector<Tensor> mab_tensors(const MabParams& p) {
  return {p.w_q, p.w_k, p.w_v, p.w_o, p.w_ff, p.b_ff};
}

PointCloud random_cloud(std::size_t n, int dims, Rng& rng) {
  PointCloud c;
  c.dims = dims;
  c.coords.resize(n * dims);
  for (auto& v : c.coords) v = rng.normal();
  return c;
}

PointCloud permute_cloud(const PointCloud& cloud, Rng& rng) {
  std::vector<std::size_t> order(cloud.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  PointCloud out = cloud;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (int d = 0; d < cloud.dims; ++d)
      out.coords[i * cloud.dims + d] = cloud.coord(order[i], d);
  return out;
}

// Scalar per-row single-head reference, independent of the tensor graph.
std::vector<double> reference_mab_rows(const std::vector<double>& x, std::size_t n,
                                       const std::vector<double>& y, std::size_t m,
                                       std::size_t d, const MabParams& p) {
  const std::size_t dh = p.w_q.shape()[1];
  auto project = [&](const std::vector<double>& src, std::size_t rows, const Tensor& w) {
    std::vector<double> out(rows * dh, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < dh; ++j)
        for (std::size_t l = 0; l < d; ++l) out[i * dh + j] += src[i * d + l] * w.at(l, j);
    return out;
  };
  const std::vector<double> q = project(x, n, p.w_q);
  const std::vector<double> k = project(y, m, p.w_k);
  const std::vector<double> v = project(y, m, p.w_v);
  std::vector<double> out(n * dh);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t l = 0; l < dh; ++l) scores[j] += q[i * dh + l] * k[j * dh + l];
    const double sc = p.scale_attention ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
    double mx = scores[0] * sc;
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, scores[j] * sc);
    double denom = 0;
    for (std::size_t j = 0; j < m; ++j) denom += std::exp(scores[j] * sc - mx);
    std::vector<double> attn(dh, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const double a = std::exp(scores[j] * sc - mx) / denom;
      for (std::size_t l = 0; l < dh; ++l) attn[l] += a * v[j * dh + l];
    }
    std::vector<double> attn_o(dh, 0.0);
    for (std::size_t l = 0; l < dh; ++l)
      for (std::size_t l2 = 0; l2 < dh; ++l2) attn_o[l] += attn[l2] * p.w_o.at(l2, l);
    std::vector<double> h(dh);
    for (std::size_t l = 0; l < dh; ++l) {
      const double resid = d == dh ? x[i * d + l] : q[i * dh + l];
      h[l] = resid + attn_o[l];
    }
    for (std::size_t l = 0; l < dh; ++l) {
      double ff = p.b_ff.at(0, l);
      for (std::size_t l2 = 0; l2 < dh; ++l2) ff += h[l2] * p.w_ff.at(l2, l);
      out[i * dh + l] = h[l] + (ff > 0 ? ff : 0.01 * ff);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("mab with a single key attends with weight exactly 1") {
  Rng rng(1);
  MabParams p = make_test_mab(4, 4, 2, rng);
  Tensor x = random_matrix(5, 4, rng);
  Tensor y = random_matrix(1, 4, rng);
  AttentionSink sink;
  mab(x, y, p, nullptr, &sink);
  REQUIRE(sink.rows == 5);
  REQUIRE(sink.cols == 1);
  for (double w : sink.weights) CHECK(w == 1.0);
}

TEST_CASE("mab matches the scalar per-row reference") {
  Rng rng(2);
  MabParams p = make_test_mab(2, 2, 1, rng);
  Tensor x = random_matrix(3, 2, rng);
  Tensor y = random_matrix(2, 2, rng);
  Tensor out = mab(x, y, p);
  std::vector<double> xs(x.data().begin(), x.data().end());
  std::vector<double> ys(y.data().begin(), y.data().end());
  const std::vector<double> ref = reference_mab_rows(xs, 3, ys, 2, 2, p);
  REQUIRE(out.numel() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(out.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("mab is invariant to key permutations and equivariant to query permutations") {
  Rng rng(3);
  MabParams p = make_test_mab(4, 8, 2, rng);
  Tensor x = random_matrix(6, 4, rng);
  Tensor y = random_matrix(5, 4, rng);
  Tensor base = mab(x, y, p);

  // permute Y rows
  std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Tensor yp = Tensor::zeros({5, 4});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) yp.data()[i * 4 + j] = y.at(perm[i], j);
  Tensor out_yp = mab(x, yp, p);
  for (std::size_t i = 0; i < base.numel(); ++i)
    CHECK(std::fabs(out_yp.data()[i] - base.data()[i]) < 1e-9);

  // permute X rows: output rows permute identically
  std::vector<std::size_t> xperm = {5, 2, 0, 4, 1, 3};
  Tensor xp = Tensor::zeros({6, 4});
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) xp.data()[i * 4 + j] = x.at(xperm[i], j);
  Tensor out_xp = mab(xp, y, p);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(std::fabs(out_xp.at(i, j) - base.at(xperm[i], j)) < 1e-9);
}

TEST_CASE("masked keys are equivalent to absent keys") {
  Rng rng(4);
  MabParams p = make_test_mab(3, 6, 3, rng);
  Tensor x = random_matrix(4, 3, rng);
  Tensor y_full = random_matrix(5, 3, rng);
  Tensor y_short = Tensor::zeros({3, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) y_short.data()[i * 3 + j] = y_full.at(i, j);
  std::vector<std::uint8_t> mask = {1, 1, 1, 0, 0};
  Tensor masked = mab(x, y_full, p, &mask);
  Tensor plain = mab(x, y_short, p);
  for (std::size_t i = 0; i < masked.numel(); ++i)
    CHECK(masked.data()[i] == doctest::Approx(plain.data()[i]).epsilon(1e-12));
}

TEST_CASE("mab rejects a fully masked key set") {
  Rng rng(5);
  MabParams p = make_test_mab(3, 6, 2, rng);
  Tensor x = random_matrix(2, 3, rng);
  Tensor y = random_matrix(3, 3, rng);
  std::vector<std::uint8_t> mask = {0, 0, 0};
  CHECK_THROWS_AS(mab(x, y, p, &mask), std::invalid_argument);
}

TEST_CASE("sab equals mab(X, X) bitwise and handles one point") {
  Rng rng(6);
  MabParams p = make_test_mab(4, 4, 1, rng);
  Tensor x = random_matrix(5, 4, rng);
  Tensor a = sab(x, p);
  Tensor b = mab(x, x, p);
  CHECK(a.data() == b.data());

  Tensor single = random_matrix(1, 4, rng);
  Tensor out = sab(single, p);
  for (real v : out.data()) CHECK(std::isfinite(v));
}

TEST_CASE("sab permutation equivariance") {
  Rng rng(7);
  MabParams p = make_test_mab(4, 8, 2, rng);
  Tensor x = random_matrix(7, 4, rng);
  Tensor base = sab(x, p);
  std::vector<std::size_t> perm = {6, 4, 2, 0, 1, 3, 5};
  Tensor xp = Tensor::zeros({7, 4});
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) xp.data()[i * 4 + j] = x.at(perm[i], j);
  Tensor out = sab(xp, p);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(std::fabs(out.at(i, j) - base.at(perm[i], j)) < 1e-9);
}

TEST_CASE("isab with one inducing point stays finite and equivariant") {
  Rng rng(8);
  IsabParams p;
  p.inducing = random_matrix(1, 6, rng);
  p.inner = make_test_mab(6, 6, 2, rng);
  p.outer = make_test_mab(6, 6, 2, rng);
  Tensor x = random_matrix(9, 6, rng);
  Tensor base = isab(x, p);
  for (real v : base.data()) CHECK(std::isfinite(v));

  std::vector<std::size_t> perm = {8, 0, 7, 1, 6, 2, 5, 3, 4};
  Tensor xp = Tensor::zeros({9, 6});
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 6; ++j) xp.data()[i * 6 + j] = x.at(perm[i], j);
  Tensor out = isab(xp, p);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      CHECK(std::fabs(out.at(i, j) - base.at(perm[i], j)) < 1e-9);
}

TEST_CASE("isab MAC count is linear in cloud size") {
  ModelSpec spec = ModelSpec::fst_full(4);
  auto model = make_classifier(spec, 1);
  std::vector<double> xs, ys;
  for (std::size_t n : {64, 128, 192, 256}) {
    xs.push_back(static_cast<double>(n));
    ys.push_back(static_cast<double>(count_macs(*model, n)));
  }
  CHECK(testutil::simple_linear_r2(xs, ys) > 0.999);
}

TEST_CASE("pma is permutation invariant and pools one point") {
  Rng rng(9);
  PmaParams p;
  p.seed = random_matrix(1, 6, rng);
  p.mab = make_test_mab(6, 6, 2, rng);
  Tensor x = random_matrix(8, 6, rng);
  Tensor base = pma(x, p);
  CHECK(base.shape() == std::vector<std::size_t>{1, 6});

  std::vector<std::size_t> perm = {5, 3, 7, 1, 0, 6, 2, 4};
  Tensor xp = Tensor::zeros({8, 6});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 6; ++j) xp.data()[i * 6 + j] = x.at(perm[i], j);
  Tensor out = pma(xp, p);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::fabs(out.data()[i] - base.data()[i]) < 1e-9);

  Tensor single = random_matrix(1, 6, rng);
  for (real v : pma(single, p).data()) CHECK(std::isfinite(v));
}

TEST_CASE("pma output is unchanged by duplicating the cloud") {
  Rng rng(10);
  PmaParams p;
  p.seed = random_matrix(1, 4, rng);
  p.mab = make_test_mab(4, 4, 2, rng);
  Tensor x = random_matrix(6, 4, rng);
  Tensor doubled = concat_rows({x, x});
  Tensor a = pma(x, p);
  Tensor b = pma(doubled, p);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(std::fabs(a.data()[i] - b.data()[i]) < 1e-9);
}

TEST_CASE("fst logits are permutation invariant across cardinalities") {
  ModelSpec spec = ModelSpec::fst_full(4);
  auto model = make_classifier(spec, 3);
  Rng rng(11);
  for (std::size_t n : {7, 129, 1025}) {
    PointCloud cloud = random_cloud(n, 2, rng);
    ForwardCtx ctx;
    NoGradGuard ng;
    Tensor base = model->forward(Features{cloud}, ctx);
    REQUIRE(base.shape() == std::vector<std::size_t>{1, 4});
    for (real v : base.data()) CHECK(std::isfinite(v));
    for (int rep = 0; rep < 3; ++rep) {
      PointCloud shuffled = permute_cloud(cloud, rng);
      Tensor out = model->forward(Features{shuffled}, ctx);
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::fabs(out.data()[j] - base.data()[j]) < 1e-6);
    }
  }
}

TEST_CASE("tst3 logits are permutation invariant") {
  ModelSpec spec = ModelSpec::tst3_full(3);
  spec.hidden = 16;
  spec.heads = 2;
  spec.inducing = 4;
  auto model = make_classifier(spec, 5);
  Rng rng(12);
  PointCloud cloud = random_cloud(50, 3, rng);
  ForwardCtx ctx;
  NoGradGuard ng;
  Tensor base = model->forward(Features{cloud}, ctx);
  for (int rep = 0; rep < 5; ++rep) {
    PointCloud shuffled = permute_cloud(cloud, rng);
    Tensor out = model->forward(Features{shuffled}, ctx);
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::fabs(out.data()[j] - base.data()[j]) < 1e-6);
  }
}

TEST_CASE("batched forward equals single-cloud forward") {
  ModelSpec spec = ModelSpec::fst_full(4);
  spec.hidden = 16;
  spec.heads = 2;
  spec.inducing = 4;
  auto model = make_classifier(spec, 7);
  Rng rng(13);
  PointCloud small = random_cloud(7, 2, rng);
  PointCloud big = random_cloud(12, 2, rng);
  ForwardCtx ctx;
  NoGradGuard ng;
  Tensor single_small = model->forward(Features{small}, ctx);
  Tensor single_big = model->forward(Features{big}, ctx);
  Tensor batched = batch_logits(*model, batch({small, big}), ctx);
  REQUIRE(batched.shape() == std::vector<std::size_t>{2, 4});
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(std::fabs(batched.at(0, j) - single_small.data()[j]) < 1e-6);
    CHECK(std::fabs(batched.at(1, j) - single_big.data()[j]) < 1e-6);
  }
}

TEST_CASE("attention weights sum to one and trivially for one point") {
  ModelSpec spec = ModelSpec::fst_toy();
  auto model = make_classifier(spec, 9);
  Rng rng(14);
  PointCloud cloud = random_cloud(64, 2, rng);
  std::vector<double> w = attention_weights(*model, cloud);
  REQUIRE(w.size() == 64);
  double s = 0;
  for (double v : w) s += v;
  CHECK(std::fabs(s - 1.0) < 1e-9);

  PointCloud one = random_cloud(1, 2, rng);
  std::vector<double> w1 = attention_weights(*model, one);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0] == 1.0);

  PointCloud empty;
  CHECK_THROWS_AS(attention_weights(*model, empty), std::invalid_argument);
}

TEST_CASE("fb zero weights give zero logits and parameter counts match") {
  auto model = make_classifier(ModelSpec::fb_toy(), 1);
  CHECK(count_params(*model) == 538);
  for (Param& p : model->params()) std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
  FeatVec v;
  v.values.assign(64, 0.7);
  ForwardCtx ctx;
  Tensor logits = model->forward(Features{v}, ctx);
  for (real x : logits.data()) CHECK(x == 0.0);
}

TEST_CASE("fb rejects wrong-length inputs") {
  auto model = make_classifier(ModelSpec::fb_full(1025, 10), 1);
  FeatVec v;
  v.values.assign(513, 0.0);
  ForwardCtx ctx;
  CHECK_THROWS_AS(model->forward(Features{v}, ctx), std::invalid_argument);
}

TEST_CASE("full preset parameter counts") {
  // frozen from layer-size arithmetic
  CHECK(count_params(*make_classifier(ModelSpec::fst_full(10), 1)) == 105674);
  CHECK(count_params(*make_classifier(ModelSpec::tst3_full(10), 1)) == 105738);
  CHECK(count_params(*make_classifier(ModelSpec::fb_full(1025, 10), 1)) == 659210);
  CHECK(count_params(*make_classifier(ModelSpec::cnn_full(513, 10), 1)) == 154240);
}

TEST_CASE("cnn constant input with all-ones kernel sums the window") {
  ModelSpec spec = ModelSpec::cnn_full(8, 2);
  spec.cnn_channels = 1;
  auto model = make_classifier(spec, 1);
  for (Param& p : model->params()) {
    if (p.name == "conv.w") std::fill(p.value.data().begin(), p.value.data().end(), 1.0);
    if (p.name == "conv.b") std::fill(p.value.data().begin(), p.value.data().end(), 0.0);
    if (p.name == "classify.w") {
      // first logit sums the flattened conv activations
      for (std::size_t r = 0; r < p.value.shape()[0]; ++r) p.value.data()[r * 2] = 1.0;
    }
  }
  FeatGrid g;
  g.rows = 10;
  g.cols = 8;
  g.values.assign(80, 1.0);
  ForwardCtx ctx;
  Tensor logits = model->forward(Features{g}, ctx);
  CHECK(logits.at(0, 0) == doctest::Approx(10.0 * 8));  // 10 per bin, 8 bins
  CHECK(logits.at(0, 1) == 0.0);
}

TEST_CASE("cnn rejects wrong frame counts") {
  auto model = make_classifier(ModelSpec::cnn_full(16, 3), 1);
  FeatGrid g;
  g.rows = 9;
  g.cols = 16;
  g.values.assign(9 * 16, 0.0);
  ForwardCtx ctx;
  CHECK_THROWS_AS(model->forward(Features{g}, ctx), std::invalid_argument);
}

TEST_CASE("cnn gradient check on a small grid") {
  ModelSpec spec = ModelSpec::cnn_full(8, 3);
  spec.cnn_channels = 2;
  auto model = make_classifier(spec, 11);
  Rng rng(15);
  FeatGrid g;
  g.rows = 10;
  g.cols = 8;
  g.values.resize(80);
  for (auto& v : g.values) v = rng.normal();
  std::vector<Tensor> tensors;
  for (Param& p : model->params()) {
    for (auto& value : p.value.data()) value = rng.normal() * 0.3;
    tensors.push_back(p.value);
  }
  ForwardCtx ctx;
  real err = grad_check(
      [&] { return cross_entropy_logits(model->forward(Features{g}, ctx), {1}); }, tensors);
  CHECK(err < 1e-5);
}

TEST_CASE("end-to-end gradient checks on tiny set transformers") {
  for (ModelKind kind : {ModelKind::fst, ModelKind::tst3}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.input_dim = kind == ModelKind::fst ? 2 : 3;
    spec.hidden = 4;
    spec.heads = 2;
    spec.inducing = 3;
    spec.classes = 2;
    auto model = make_classifier(spec, 17);
    Rng rng(18);
    PointCloud cloud = random_cloud(8, static_cast<int>(spec.input_dim), rng);
    std::vector<Tensor> tensors;
    for (Param& p : model->params()) tensors.push_back(p.value);
    ForwardCtx ctx;
    real err = grad_check(
        [&] { return cross_entropy_logits(model->forward(Features{cloud}, ctx), {1}); },
        tensors, 1e-4);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("mab gradient through a pooled cross-entropy loss") {
  Rng rng(19);
  MabParams p = make_test_mab(4, 4, 2, rng);
  Tensor x = random_matrix(4, 4, rng);
  PmaParams pool;
  pool.seed = random_matrix(1, 4, rng);
  pool.mab = make_test_mab(4, 4, 2, rng);
  std::vector<Tensor> tensors = mab_tensors(p);
  for (Tensor& t : mab_tensors(pool.mab)) tensors.push_back(t);
  tensors.push_back(pool.seed);
  tensors.push_back(x);
  real err = grad_check(
      [&] { return cross_entropy_logits(pma(sab(x, p), pool), {2}); }, tensors, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("pad_window_input pads in the centre") {
  std::vector<double> w(2048, 0.5);
  CHECK(pad_window_input(w, 2048) == w);

  std::vector<double> half(1024, 1.0);
  std::vector<double> padded = pad_window_input(half, 2048);
  REQUIRE(padded.size() == 2048);
  std::size_t zeros = 0;
  for (double v : padded) zeros += v == 0.0;
  CHECK(zeros == 1024);
  CHECK(padded[512] == 1.0);

  std::vector<double> big(4096, 1.0);
  CHECK_THROWS_AS(pad_window_input(big, 2048), std::invalid_argument);
}

TEST_CASE("pad_window_input keeps the spectral peak position") {
  const double sr = 16000.0, freq = 1000.0;
  std::vector<double> window(1024);
  for (std::size_t t = 0; t < window.size(); ++t)
    window[t] = std::sin(2.0 * M_PI * freq * t / sr);
  std::vector<double> padded = pad_window_input(window, 2048);
  const double peak = testutil::peak_frequency(padded, sr);
  const double expected_bin = std::round(freq / (sr / 2048.0));
  CHECK(std::fabs(peak - expected_bin * sr / 2048.0) <= sr / 2048.0 + 1e-9);
  CHECK(std::fabs(peak - freq) <= 2 * sr / 2048.0);
}

TEST_CASE("zero_out keeps listed entries") {
  std::vector<double> v = {5, 6, 7};
  CHECK(zero_out(v, {0, 1, 2}) == v);
  CHECK(zero_out(v, {}) == std::vector<double>{0, 0, 0});
  CHECK(zero_out(v, {0, 2}) == std::vector<double>{5, 0, 7});
  CHECK_THROWS_AS(zero_out(v, {3}), std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves logits") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "pcaudio_ckpt_test";
  fs::create_directories(dir);
  ModelSpec spec = ModelSpec::fst_full(4);
  spec.hidden = 8;
  spec.heads = 2;
  spec.inducing = 2;
  auto model = make_classifier(spec, 23);
  nlohmann::json extra;
  extra["note"] = "fixture";
  const std::string path = (dir / "model.json").string();
  save_checkpoint(*model, path, extra);

  nlohmann::json loaded_extra;
  auto loaded = load_checkpoint(path, &loaded_extra);
  CHECK(loaded_extra.at("note") == "fixture");
  CHECK(count_params(*loaded) == count_params(*model));

  Rng rng(24);
  PointCloud cloud = random_cloud(20, 2, rng);
  ForwardCtx ctx;
  NoGradGuard ng;
  Tensor a = model->forward(Features{cloud}, ctx);
  Tensor b = loaded->forward(Features{cloud}, ctx);
  CHECK(a.data() == b.data());
  fs::remove_all(dir);
}

TEST_CASE("count_macs scales with training and input size") {
  ModelSpec spec = ModelSpec::fst_full(4);
  spec.hidden = 16;
  spec.heads = 2;
  spec.inducing = 4;
  auto model = make_classifier(spec, 1);
  const std::uint64_t fwd = count_macs(*model, 100);
  const std::uint64_t train = count_macs(*model, 100, true);
  CHECK(fwd > 0);
  CHECK(train > 2 * fwd);

  auto fb = make_classifier(ModelSpec::fb_toy(), 1);
  // 64*8 + 8*2 kernel MACs dominate; elementwise ops add a few more
  const std::uint64_t fb_fwd = count_macs(*fb, 0);
  CHECK(fb_fwd >= 64 * 8 + 8 * 2);
  CHECK(fb_fwd < 2 * (64 * 8 + 8 * 2) + 600);
}
