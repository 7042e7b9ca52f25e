#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sgkd/core/rng.hpp"
#include "sgkd/core/tensor.hpp"
#include "sgkd/nn/activations.hpp"
#include "sgkd/nn/batchnorm.hpp"
#include "sgkd/nn/conv.hpp"
#include "sgkd/nn/dense.hpp"
#include "sgkd/nn/loss.hpp"
#include "sgkd/nn/pool.hpp"

namespace sgkd {

// Central finite differences in double precision, step 1e-5. Relative error
// uses a denominator floor of 1e-4: objectives are scaled to O(1), so the
// floor turns near-zero gradient coordinates into an absolute comparison
// against ~1e-8 while leaving real coordinates on a relative scale.
inline double fd_relative_error(double analytic, double numeric) {
  const double err = std::abs(analytic - numeric);
  return err / std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

struct FdResult {
  double max_rel_err = 0;
  std::size_t coords = 0;
};

// Probes up to max_coords coordinates of x (all when 0). eval() must return
// the scalar objective computed from the current contents of x.
template <typename Eval>
FdResult fd_check(Tensor<double>& x, const Tensor<double>& analytic, Eval&& eval,
                  double step = 1e-5, std::size_t max_coords = 0, std::uint64_t coord_seed = 1) {
  if (!x.same_shape(analytic)) throw ShapeError("fd_check: analytic gradient shape mismatch");
  std::vector<std::size_t> coords(x.numel());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(coord_seed);
    rng.shuffle(coords.begin(), coords.end());
    coords.resize(max_coords);
  }
  FdResult res;
  res.coords = coords.size();
  for (std::size_t i : coords) {
    const double saved = x[i];
    x[i] = saved + step;
    const double fp = eval();
    x[i] = saved - step;
    const double fm = eval();
    x[i] = saved;
    const double numeric = (fp - fm) / (2.0 * step);
    res.max_rel_err = std::max(res.max_rel_err, fd_relative_error(analytic[i], numeric));
  }
  return res;
}

enum class LayerKind {
  conv2d,
  maxpool2d,
  batchnorm2d,
  relu,
  global_avg_pool,
  dense,
  dropout,
  softmax,
  cross_entropy,
  combined_loss,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::batchnorm2d: return "batchnorm2d";
    case LayerKind::relu: return "relu";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax: return "softmax";
    case LayerKind::cross_entropy: return "cross_entropy";
    case LayerKind::combined_loss: return "combined_loss";
  }
  return "?";
}

struct GradCheckEntry {
  std::string target;  // which gradient was probed (input / kernels / gamma / ...)
  double max_rel_err = 0;
  std::size_t coords = 0;
};

struct GradCheckReport {
  std::string layer;
  double tolerance = 1e-4;
  std::vector<GradCheckEntry> entries;

  double worst() const {
    double m = 0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_err);
    return m;
  }
  bool passed() const { return worst() < tolerance; }
};

namespace detail {

inline Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Random cotangent scaled so the objective <w, out> stays O(1).
inline Tensor<double> random_cotangent(const std::vector<std::size_t>& shape, Rng& rng) {
  Tensor<double> w(shape);
  const double s = 1.0 / std::sqrt(static_cast<double>(w.numel()));
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1.0, 1.0) * s;
  return w;
}

inline double weighted_sum(const Tensor<double>& out, const Tensor<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) s += out[i] * w[i];
  return s;
}

}  // namespace detail

// Builds a random small instance of the layer, computes the analytic gradient
// of a fixed random linear objective (or the loss itself for loss layers), and
// compares every differentiable argument against central finite differences.
// Failures are reported through GradCheckReport::passed, not thrown.
inline GradCheckReport grad_check_layer(LayerKind kind, Rng& rng, double tolerance = 1e-4) {
  using detail::random_cotangent;
  using detail::random_tensor;
  using detail::weighted_sum;

  GradCheckReport report;
  report.layer = layer_kind_name(kind);
  report.tolerance = tolerance;
  auto add = [&report](const std::string& target, const FdResult& r) {
    report.entries.push_back({target, r.max_rel_err, r.coords});
  };

  switch (kind) {
    case LayerKind::conv2d: {
      const std::size_t b = 1 + rng.uniform_index(2), c = 1 + rng.uniform_index(3);
      const std::size_t f = 1 + rng.uniform_index(4), k = 1 + rng.uniform_index(3);
      const std::size_t stride = 1 + rng.uniform_index(2);
      const std::size_t h = k + rng.uniform_index(5), w = k + rng.uniform_index(5);
      auto x = random_tensor({b, c, h, w}, rng);
      auto ker = random_tensor({f, c, k, k}, rng);
      auto bias = random_tensor({f}, rng);
      auto [out, cache] = conv2d_forward(x, ker, bias, stride);
      auto wgt = random_cotangent(out.shape(), rng);
      auto grads = conv2d_backward(wgt, cache, ker);
      auto eval_x = [&] { return weighted_sum(conv2d_forward(x, ker, bias, stride).first, wgt); };
      add("input", fd_check(x, grads.input, eval_x));
      add("kernels", fd_check(ker, grads.kernels, eval_x));
      add("bias", fd_check(bias, grads.bias, eval_x));
      break;
    }
    case LayerKind::maxpool2d: {
      const std::size_t b = 1 + rng.uniform_index(2), c = 1 + rng.uniform_index(3);
      const std::size_t h = 2 + rng.uniform_index(6), w = 2 + rng.uniform_index(6);
      auto x = random_tensor({b, c, h, w}, rng);
      auto [out, cache] = maxpool2d_forward(x);
      auto wgt = random_cotangent(out.shape(), rng);
      auto grad = maxpool2d_backward(wgt, cache);
      add("input", fd_check(x, grad, [&] { return weighted_sum(maxpool2d_forward(x).first, wgt); }));
      break;
    }
    case LayerKind::batchnorm2d: {
      const std::size_t b = 2 + rng.uniform_index(3), c = 1 + rng.uniform_index(3);
      const std::size_t h = 2 + rng.uniform_index(4), w = 2 + rng.uniform_index(4);
      auto x = random_tensor({b, c, h, w}, rng);
      auto gamma = random_tensor({c}, rng, 0.5, 1.5);
      auto beta = random_tensor({c}, rng);
      auto fwd = [&] {
        BatchNormState<double> st(c);
        return batchnorm2d_forward(x, gamma, beta, st, /*train=*/true);
      };
      auto [out, cache] = fwd();
      auto wgt = random_cotangent(out.shape(), rng);
      auto grads = batchnorm2d_backward(wgt, cache, gamma);
      auto eval = [&] { return weighted_sum(fwd().first, wgt); };
      add("input", fd_check(x, grads.input, eval));
      add("gamma", fd_check(gamma, grads.gamma, eval));
      add("beta", fd_check(beta, grads.beta, eval));
      break;
    }
    case LayerKind::relu: {
      const std::size_t n = 8 + rng.uniform_index(40);
      // Keep values away from the kink so finite differences stay valid.
      Tensor<double> x({n});
      for (std::size_t i = 0; i < n; ++i) {
        const double v = rng.uniform(1e-3, 1.0);
        x[i] = rng.uniform() < 0.5 ? -v : v;
      }
      auto run = [&](const Tensor<double>& in) { return relu_forward(Tensor<double>(in)).first; };
      auto out = run(x);
      auto wgt = random_cotangent(out.shape(), rng);
      auto [o2, cache] = relu_forward(Tensor<double>(x));
      (void)o2;
      auto grad = relu_backward(Tensor<double>(wgt), cache);
      add("input", fd_check(x, grad, [&] { return weighted_sum(run(x), wgt); }));
      break;
    }
    case LayerKind::global_avg_pool: {
      const std::size_t b = 1 + rng.uniform_index(3), c = 1 + rng.uniform_index(4);
      const std::size_t h = 1 + rng.uniform_index(6), w = 1 + rng.uniform_index(6);
      auto x = random_tensor({b, c, h, w}, rng);
      auto [out, cache] = global_avg_pool_forward(x);
      auto wgt = random_cotangent(out.shape(), rng);
      auto grad = global_avg_pool_backward(wgt, cache);
      add("input", fd_check(x, grad, [&] {
            return weighted_sum(global_avg_pool_forward(x).first, wgt);
          }));
      break;
    }
    case LayerKind::dense: {
      const std::size_t b = 1 + rng.uniform_index(4), in = 1 + rng.uniform_index(8);
      const std::size_t out_n = 1 + rng.uniform_index(6);
      auto x = random_tensor({b, in}, rng);
      auto wm = random_tensor({out_n, in}, rng);
      auto bias = random_tensor({out_n}, rng);
      auto [out, cache] = dense_forward(x, wm, bias);
      auto wgt = random_cotangent(out.shape(), rng);
      auto grads = dense_backward(wgt, cache, wm);
      auto eval = [&] { return weighted_sum(dense_forward(x, wm, bias).first, wgt); };
      add("input", fd_check(x, grads.input, eval));
      add("weight", fd_check(wm, grads.weight, eval));
      add("bias", fd_check(bias, grads.bias, eval));
      break;
    }
    case LayerKind::dropout: {
      // The mask is frozen from one forward call; the check differentiates the
      // masked-and-scaled map itself.
      const std::size_t n = 8 + rng.uniform_index(40);
      auto x = random_tensor({n}, rng);
      const double p = 0.2 + 0.3 * rng.uniform();
      Rng mask_rng(rng.next_u64());
      auto [out, cache] = dropout_forward(Tensor<double>(x), p, /*train=*/true, &mask_rng);
      (void)out;
      auto apply_mask = [&cache](const Tensor<double>& in) {
        Tensor<double> y(in);
        const double scale = 1.0 / (1.0 - cache.p);
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = cache.keep[i] ? y[i] * scale : 0.0;
        return y;
      };
      auto wgt = random_cotangent(x.shape(), rng);
      auto grad = dropout_backward(Tensor<double>(wgt), cache);
      add("input", fd_check(x, grad, [&] { return weighted_sum(apply_mask(x), wgt); }));
      break;
    }
    case LayerKind::softmax: {
      const std::size_t b = 1 + rng.uniform_index(4), k = 2 + rng.uniform_index(6);
      auto z = random_tensor({b, k}, rng, -2.0, 2.0);
      auto y = softmax(z);
      auto wgt = random_cotangent(y.shape(), rng);
      auto grad = softmax_backward(wgt, y);
      add("logits", fd_check(z, grad, [&] { return weighted_sum(softmax(z), wgt); }));
      break;
    }
    case LayerKind::cross_entropy:
    case LayerKind::combined_loss: {
      const std::size_t b = 1 + rng.uniform_index(6), k = 5;
      auto z = random_tensor({b, k}, rng, -2.0, 2.0);
      std::vector<int> targets(b);
      for (auto& t : targets) t = static_cast<int>(rng.uniform_index(k));
      auto run = [&](const Tensor<double>& logits) {
        return kind == LayerKind::cross_entropy
                   ? cross_entropy<double>(logits, targets)
                   : combined_ce_mse<double>(logits, targets);
      };
      auto res = run(z);
      add("logits", fd_check(z, res.grad_logits, [&] { return run(z).loss; }));
      break;
    }
  }
  return report;
}

}  // namespace sgkd
