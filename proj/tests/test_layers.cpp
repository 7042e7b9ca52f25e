#include <catch_amalgamated.hpp>

#include "sgkd/core/rng.hpp"
#include "sgkd/nn/activations.hpp"
#include "sgkd/nn/batchnorm.hpp"
#include "sgkd/nn/conv.hpp"
#include "sgkd/nn/dense.hpp"
#include "sgkd/nn/gradcheck.hpp"
#include "sgkd/nn/pool.hpp"

using namespace sgkd;

namespace {

// Independent direct convolution: six nested loops, no padding.
Tensor<double> conv2d_direct(const Tensor<double>& in, const Tensor<double>& ker,
                             const Tensor<double>& bias, std::size_t stride) {
  const std::size_t b_n = in.dim(0), c_n = in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t f_n = ker.dim(0), k = ker.dim(2);
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;
  Tensor<double> out({b_n, f_n, oh, ow});
  for (std::size_t b = 0; b < b_n; ++b)
    for (std::size_t f = 0; f < f_n; ++f)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          double s = bias[f];
          for (std::size_t c = 0; c < c_n; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j)
                s += in.at4(b, c, y * stride + i, x * stride + j) * ker.at4(f, c, i, j);
          out.at4(b, f, y, x) = s;
        }
  return out;
}

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("conv2d identity and sum kernels") {
  Tensor<double> x({1, 1, 1, 1});
  x[0] = 5.0;
  Tensor<double> k({1, 1, 1, 1});
  k[0] = 1.0;
  Tensor<double> b({1});
  auto [out, cache] = conv2d_forward(x, k, b, 1);
  CHECK(out.numel() == 1);
  CHECK(out[0] == 5.0);

  auto ones_x = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto ones_k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto [out2, cache2] = conv2d_forward(ones_x, ones_k, b, 1);
  REQUIRE(out2.shape() == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(out2[0] == 9.0);
}

TEST_CASE("conv2d matches the direct nested-loop oracle") {
  Rng rng(123);
  auto x = random_tensor({2, 3, 8, 8}, rng);
  auto k = random_tensor({4, 3, 3, 3}, rng);
  auto b = random_tensor({4}, rng);
  auto [out, cache] = conv2d_forward(x, k, b, 2);
  REQUIRE(out.shape() == std::vector<std::size_t>{2, 4, 3, 3});
  auto expect = conv2d_direct(x, k, b, 2);
  for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::abs(out[i] - expect[i]) < 1e-12);

  // A spread of shapes, strides and kernel sizes.
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = 1 + rng.uniform_index(4), f = 1 + rng.uniform_index(5);
    const std::size_t kk = 1 + rng.uniform_index(3), stride = 1 + rng.uniform_index(3);
    const std::size_t h = kk + rng.uniform_index(7), w = kk + rng.uniform_index(7);
    auto xi = random_tensor({1 + rng.uniform_index(2), c, h, w}, rng);
    auto ki = random_tensor({f, c, kk, kk}, rng);
    auto bi = random_tensor({f}, rng);
    auto got = conv2d_forward(xi, ki, bi, stride).first;
    auto want = conv2d_direct(xi, ki, bi, stride);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.numel(); ++i) REQUIRE(std::abs(got[i] - want[i]) < 1e-12);
  }
}

TEST_CASE("conv2d rejects channel mismatch with a shape diagnostic") {
  Tensor<double> x({1, 2, 4, 4});
  Tensor<double> k({1, 3, 3, 3});
  Tensor<double> b({1});
  CHECK_THROWS_WITH(conv2d_forward(x, k, b, 1),
                    Catch::Matchers::ContainsSubstring("channels"));
  CHECK_THROWS_AS(conv2d_forward(x, k, b, 1), ShapeError);
}

TEST_CASE("conv2d backward zero cotangent and scalar chain rule") {
  Rng rng(5);
  auto x = random_tensor({1, 2, 5, 5}, rng);
  auto k = random_tensor({3, 2, 3, 3}, rng);
  auto b = random_tensor({3}, rng);
  auto [out, cache] = conv2d_forward(x, k, b, 1);
  Tensor<double> zeros(out.shape());
  auto g = conv2d_backward(zeros, cache, k);
  for (std::size_t i = 0; i < g.input.numel(); ++i) CHECK(g.input[i] == 0.0);
  for (std::size_t i = 0; i < g.kernels.numel(); ++i) CHECK(g.kernels[i] == 0.0);
  for (std::size_t i = 0; i < g.bias.numel(); ++i) CHECK(g.bias[i] == 0.0);

  // Scalar case: out = x*k + b.
  Tensor<double> xs({1, 1, 1, 1}), ks({1, 1, 1, 1}), bs({1});
  xs[0] = 3.0;
  ks[0] = -2.0;
  auto [so, sc] = conv2d_forward(xs, ks, bs, 1);
  Tensor<double> gout({1, 1, 1, 1});
  gout[0] = 1.5;
  auto sg = conv2d_backward(gout, sc, ks);
  CHECK(sg.kernels[0] == 1.5 * 3.0);
  CHECK(sg.input[0] == 1.5 * -2.0);
  CHECK(sg.bias[0] == 1.5);
}

TEST_CASE("conv2d backward rejects a mismatched cache") {
  Rng rng(9);
  auto x = random_tensor({1, 1, 4, 4}, rng);
  auto k = random_tensor({2, 1, 3, 3}, rng);
  auto b = random_tensor({2}, rng);
  auto [out, cache] = conv2d_forward(x, k, b, 1);
  Tensor<double> wrong({1, 2, 3, 3});  // wrong spatial extent
  CHECK_THROWS_AS(conv2d_backward(wrong, cache, k), ShapeError);
  auto other_k = random_tensor({2, 1, 1, 1}, rng);
  Tensor<double> gout(out.shape());
  CHECK_THROWS_AS(conv2d_backward(gout, cache, other_k), ShapeError);
}

TEST_CASE("maxpool single window, ties and output shape") {
  Tensor<double> x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto [out, cache] = maxpool2d_forward(x);
  CHECK(out[0] == 4.0);
  Tensor<double> gout({1, 1, 1, 1});
  gout[0] = 1.0;
  auto gin = maxpool2d_backward(gout, cache);
  CHECK(gin.vec() == std::vector<double>{0, 0, 0, 1});

  auto c = Tensor<double>::full({1, 1, 2, 2}, 7.0);
  auto [co, cc] = maxpool2d_forward(c);
  CHECK(co[0] == 7.0);
  auto cg = maxpool2d_backward(gout, cc);
  CHECK(cg.vec() == std::vector<double>{1, 0, 0, 0});  // first maximal element in row-major order

  Tensor<double> odd({1, 1, 61, 61});
  auto [oo, oc] = maxpool2d_forward(odd);
  CHECK(oo.shape() == std::vector<std::size_t>{1, 1, 30, 30});

  Tensor<double> tiny({1, 1, 1, 4});
  CHECK_THROWS_AS(maxpool2d_forward(tiny), ShapeError);
}

TEST_CASE("maxpool backward conserves cotangent mass") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({2, 3, 2 + rng.uniform_index(9), 2 + rng.uniform_index(9)}, rng);
    auto [out, cache] = maxpool2d_forward(x);
    auto gout = random_tensor(out.shape(), rng);
    auto gin = maxpool2d_backward(gout, cache);
    double sum_out = 0, sum_in = 0;
    for (std::size_t i = 0; i < gout.numel(); ++i) sum_out += gout[i];
    for (std::size_t i = 0; i < gin.numel(); ++i) sum_in += gin[i];
    CHECK(std::abs(sum_out - sum_in) < 1e-12);
  }
}

TEST_CASE("batchnorm normalizes and handles degenerate gamma") {
  // Zero-mean unit-variance channel with gamma=1, beta=0 passes through up to
  // the eps-induced scaling.
  Tensor<double> x({1, 1, 2, 2}, {-1.0, 1.0, -1.0, 1.0});
  auto gamma = Tensor<double>::full({1}, 1.0);
  Tensor<double> beta({1});
  BatchNormState<double> st(1);
  auto [out, cache] = batchnorm2d_forward(x, gamma, beta, st, true);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == Catch::Approx(x[i]).margin(1e-4));

  // gamma=0, beta=c collapses to the constant c.
  Rng rng(3);
  auto y = random_tensor({2, 3, 4, 4}, rng);
  auto g0 = Tensor<double>({3});
  auto bc = Tensor<double>::full({3}, 2.5);
  BatchNormState<double> st2(3);
  auto [out2, c2] = batchnorm2d_forward(y, g0, bc, st2, true);
  for (std::size_t i = 0; i < out2.numel(); ++i) CHECK(out2[i] == 2.5);
}

TEST_CASE("batchnorm eval requires running statistics") {
  Tensor<double> x({2, 1, 2, 2});
  auto gamma = Tensor<double>::full({1}, 1.0);
  Tensor<double> beta({1});
  BatchNormState<double> st(1);
  CHECK_THROWS_AS(batchnorm2d_forward(x, gamma, beta, st, false), ValueError);
  auto [o, c] = batchnorm2d_forward(x, gamma, beta, st, true);
  CHECK(st.batches_seen == 1);
  CHECK_NOTHROW(batchnorm2d_forward(x, gamma, beta, st, false));
}

TEST_CASE("batchnorm running statistics drive eval mode") {
  Rng rng(17);
  auto x = random_tensor({4, 2, 3, 3}, rng);
  auto gamma = Tensor<double>::full({2}, 1.0);
  Tensor<double> beta({2});
  BatchNormState<double> st(2);
  // Many passes over the same batch drive the running stats to the batch stats.
  Tensor<double> out({1});
  for (int i = 0; i < 200; ++i) {
    auto r = batchnorm2d_forward(x, gamma, beta, st, true);
    out = std::move(r.first);
  }
  auto ev = batchnorm2d_forward(x, gamma, beta, st, false).first;
  for (std::size_t i = 0; i < ev.numel(); ++i) CHECK(ev[i] == Catch::Approx(out[i]).margin(1e-6));
}

TEST_CASE("softmax uniform case, normalization and shift invariance") {
  auto z = Tensor<double>::full({1, 5}, 0.7);
  auto p = softmax(z);
  for (std::size_t i = 0; i < 5; ++i) CHECK(p[i] == Catch::Approx(0.2).margin(1e-12));

  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = random_tensor({3, 5}, rng);
    auto probs = softmax(logits);
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(probs.at2(b, j) >= 0.0);
        s += probs.at2(b, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
    auto shifted = logits;
    const double c = rng.uniform(-10.0, 10.0);
    for (std::size_t i = 0; i < shifted.numel(); ++i) shifted[i] += c;
    auto probs2 = softmax(shifted);
    for (std::size_t i = 0; i < probs.numel(); ++i) CHECK(std::abs(probs[i] - probs2[i]) < 1e-9);
  }
}

TEST_CASE("global average pool of a constant map") {
  auto x = Tensor<double>::full({1, 1, 10, 10}, 3.25);
  auto [out, cache] = global_avg_pool_forward(x);
  CHECK(out.numel() == 1);
  CHECK(out[0] == Catch::Approx(3.25).margin(1e-15));
}

TEST_CASE("dropout eval identity, determinism and argument validation") {
  Rng rng(8);
  auto x = random_tensor({64}, rng);
  auto [eval_out, c1] = dropout_forward(Tensor<double>(x), 0.5, /*train=*/false);
  CHECK(eval_out.vec() == x.vec());

  Rng r1(99), r2(99);
  auto a = dropout_forward(Tensor<double>(x), 0.3, true, &r1).first;
  auto b = dropout_forward(Tensor<double>(x), 0.3, true, &r2).first;
  CHECK(a.vec() == b.vec());

  bool any_zero = false;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    if (a[i] == 0.0) any_zero = true;
    else CHECK(a[i] == Catch::Approx(x[i] / 0.7));
  }
  CHECK(any_zero);

  CHECK_THROWS_AS(dropout_forward(Tensor<double>(x), 1.0, true, &r1), ValueError);
  CHECK_THROWS_AS(dropout_forward(Tensor<double>(x), -0.1, true, &r1), ValueError);
}

TEST_CASE("finite differences validate every layer backward") {
  Rng rng(2024);
  const LayerKind kinds[] = {LayerKind::conv2d,  LayerKind::maxpool2d, LayerKind::batchnorm2d,
                             LayerKind::relu,    LayerKind::global_avg_pool,
                             LayerKind::dense,   LayerKind::dropout,   LayerKind::softmax};
  for (LayerKind kind : kinds) {
    for (int trial = 0; trial < 3; ++trial) {
      auto report = grad_check_layer(kind, rng, 1e-4);
      INFO(report.layer << " trial " << trial << " worst " << report.worst());
      CHECK(report.passed());
    }
  }
}

TEST_CASE("gradcheck harness hits the spec tolerances") {
  Rng rng(555);
  // Dense layers are exactly quadratic in every argument, so central
  // differences are exact up to rounding.
  auto dense_report = grad_check_layer(LayerKind::dense, rng, 1e-6);
  CHECK(dense_report.worst() < 1e-6);

  auto conv_report = grad_check_layer(LayerKind::conv2d, rng, 1e-4);
  CHECK(conv_report.worst() < 1e-4);
}
