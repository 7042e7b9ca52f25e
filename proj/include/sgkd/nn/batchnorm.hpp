#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sgkd/core/tensor.hpp"

namespace sgkd {

// Per-channel batch normalization over [B,C,H,W]. Train mode normalizes by the
// batch statistics (biased variance) and folds them into the running estimates
// with momentum 0.1; eval mode normalizes by the running estimates and is only
// valid once at least one batch has been seen (or stats were loaded).

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;  // [C]
  Tensor<T> running_var;   // [C]
  std::uint64_t batches_seen = 0;

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean({channels}), running_var(Tensor<T>::full({channels}, T{1})) {}
};

template <typename T>
struct BatchNorm2dCache {
  Tensor<T> xhat;  // normalized input, same shape as input
  std::vector<T> inv_std;
  bool train_mode = true;
  std::array<std::size_t, 4> in_shape{};
};

template <typename T>
struct BatchNorm2dGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
std::pair<Tensor<T>, BatchNorm2dCache<T>> batchnorm2d_forward(Tensor<T> input,
                                                              const Tensor<T>& gamma,
                                                              const Tensor<T>& beta,
                                                              BatchNormState<T>& state, bool train,
                                                              T momentum = T(0.1),
                                                              T eps = T(1e-5)) {
  if (input.rank() != 4) throw ShapeError("batchnorm2d: input must be rank 4, got " + input.shape_string());
  const std::size_t b_n = input.dim(0), c_n = input.dim(1), h = input.dim(2), w = input.dim(3);
  require_shape(gamma, {c_n}, "batchnorm2d gamma");
  require_shape(beta, {c_n}, "batchnorm2d beta");
  require_shape(state.running_mean, {c_n}, "batchnorm2d running_mean");
  const std::size_t m = b_n * h * w;
  if (train && m < 2) {
    throw ValueError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                     std::to_string(m));
  }
  if (!train && state.batches_seen == 0) {
    throw ValueError("batchnorm2d: eval mode requested before any running statistics exist");
  }

  BatchNorm2dCache<T> cache;
  cache.train_mode = train;
  cache.in_shape = {b_n, c_n, h, w};
  cache.inv_std.resize(c_n);

  const std::size_t plane = h * w;
  std::vector<T> mean(c_n), var(c_n);
  if (train) {
    for (std::size_t c = 0; c < c_n; ++c) {
      T s{0};
      for (std::size_t b = 0; b < b_n; ++b) {
        const T* p = input.data() + (b * c_n + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const T mu = s / static_cast<T>(m);
      T v{0};
      for (std::size_t b = 0; b < b_n; ++b) {
        const T* p = input.data() + (b * c_n + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = p[i] - mu;
          v += d * d;
        }
      }
      mean[c] = mu;
      var[c] = v / static_cast<T>(m);
      state.running_mean[c] = (T{1} - momentum) * state.running_mean[c] + momentum * mean[c];
      state.running_var[c] = (T{1} - momentum) * state.running_var[c] + momentum * var[c];
    }
    state.batches_seen += 1;
  } else {
    for (std::size_t c = 0; c < c_n; ++c) {
      mean[c] = state.running_mean[c];
      var[c] = state.running_var[c];
    }
  }

  // Normalize in place, then scale/shift into the output.
  for (std::size_t c = 0; c < c_n; ++c) cache.inv_std[c] = T{1} / std::sqrt(var[c] + eps);
  Tensor<T> out({b_n, c_n, h, w});
  for (std::size_t b = 0; b < b_n; ++b) {
    for (std::size_t c = 0; c < c_n; ++c) {
      T* x = input.data() + (b * c_n + c) * plane;
      T* y = out.data() + (b * c_n + c) * plane;
      const T mu = mean[c], is = cache.inv_std[c], g = gamma[c], bb = beta[c];
      for (std::size_t i = 0; i < plane; ++i) {
        x[i] = (x[i] - mu) * is;
        y[i] = g * x[i] + bb;
      }
    }
  }
  cache.xhat = std::move(input);
  return {std::move(out), std::move(cache)};
}

template <typename T>
BatchNorm2dGrads<T> batchnorm2d_backward(const Tensor<T>& grad_out,
                                         const BatchNorm2dCache<T>& cache,
                                         const Tensor<T>& gamma) {
  const auto& is = cache.in_shape;
  require_shape(grad_out, {is[0], is[1], is[2], is[3]}, "batchnorm2d_backward grad_out");
  const std::size_t b_n = is[0], c_n = is[1], plane = is[2] * is[3];
  const std::size_t m = b_n * plane;

  BatchNorm2dGrads<T> g;
  g.input = Tensor<T>({is[0], is[1], is[2], is[3]});
  g.gamma = Tensor<T>({c_n});
  g.beta = Tensor<T>({c_n});

  for (std::size_t c = 0; c < c_n; ++c) {
    T sum_dy{0}, sum_dy_xhat{0};
    for (std::size_t b = 0; b < b_n; ++b) {
      const T* dy = grad_out.data() + (b * c_n + c) * plane;
      const T* xh = cache.xhat.data() + (b * c_n + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xhat;

    const T gv = gamma[c] * cache.inv_std[c];
    if (cache.train_mode) {
      // dx = gamma*inv_std * (dy - mean(dy) - xhat*mean(dy*xhat))
      const T mean_dy = sum_dy / static_cast<T>(m);
      const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(m);
      for (std::size_t b = 0; b < b_n; ++b) {
        const T* dy = grad_out.data() + (b * c_n + c) * plane;
        const T* xh = cache.xhat.data() + (b * c_n + c) * plane;
        T* dx = g.input.data() + (b * c_n + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dx[i] = gv * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    } else {
      for (std::size_t b = 0; b < b_n; ++b) {
        const T* dy = grad_out.data() + (b * c_n + c) * plane;
        T* dx = g.input.data() + (b * c_n + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dx[i] = gv * dy[i];
      }
    }
  }
  return g;
}

}  // namespace sgkd
