#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "sgkd/core/rng.hpp"
#include "sgkd/core/tensor.hpp"

namespace sgkd {

// ---------------------------------------------------------------- ReLU

struct ReluCache {
  std::vector<std::uint8_t> positive;
};

template <typename T>
std::pair<Tensor<T>, ReluCache> relu_forward(Tensor<T> input) {
  ReluCache cache;
  cache.positive.resize(input.numel());
  T* p = input.data();
  for (std::size_t i = 0; i < input.numel(); ++i) {
    cache.positive[i] = p[i] > T{0};
    if (!cache.positive[i]) p[i] = T{0};
  }
  return {std::move(input), std::move(cache)};
}

template <typename T>
Tensor<T> relu_backward(Tensor<T> grad_out, const ReluCache& cache) {
  if (grad_out.numel() != cache.positive.size()) {
    throw ShapeError("relu_backward: grad size does not match the cached forward call");
  }
  T* p = grad_out.data();
  for (std::size_t i = 0; i < grad_out.numel(); ++i) {
    if (!cache.positive[i]) p[i] = T{0};
  }
  return grad_out;
}

// ------------------------------------------------- global average pooling

struct GapCache {
  std::array<std::size_t, 4> in_shape{};
};

// [B,C,H,W] -> [B,C], arithmetic mean per channel plane.
template <typename T>
std::pair<Tensor<T>, GapCache> global_avg_pool_forward(const Tensor<T>& input) {
  if (input.rank() != 4) throw ShapeError("global_avg_pool: input must be rank 4, got " + input.shape_string());
  const std::size_t b_n = input.dim(0), c_n = input.dim(1), plane = input.dim(2) * input.dim(3);
  Tensor<T> out({b_n, c_n});
  for (std::size_t bc = 0; bc < b_n * c_n; ++bc) {
    const T* p = input.data() + bc * plane;
    T s{0};
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    out[bc] = s / static_cast<T>(plane);
  }
  GapCache cache;
  cache.in_shape = {b_n, c_n, input.dim(2), input.dim(3)};
  return {std::move(out), cache};
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out, const GapCache& cache) {
  const auto& is = cache.in_shape;
  require_shape(grad_out, {is[0], is[1]}, "global_avg_pool_backward grad_out");
  const std::size_t plane = is[2] * is[3];
  Tensor<T> grad_in({is[0], is[1], is[2], is[3]});
  for (std::size_t bc = 0; bc < is[0] * is[1]; ++bc) {
    const T v = grad_out[bc] / static_cast<T>(plane);
    T* p = grad_in.data() + bc * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = v;
  }
  return grad_in;
}

// ---------------------------------------------------------------- dropout

template <typename T>
struct DropoutCache {
  std::vector<std::uint8_t> keep;  // empty in eval mode
  T p{0};
};

// Train mode zeroes each unit with probability p and scales survivors by
// 1/(1-p); eval mode is the identity.
template <typename T>
std::pair<Tensor<T>, DropoutCache<T>> dropout_forward(Tensor<T> input, T p, bool train,
                                                      Rng* rng = nullptr) {
  if (!(p >= T{0} && p < T{1})) {
    throw ValueError("dropout: p must be in [0,1), got " + std::to_string(p));
  }
  DropoutCache<T> cache;
  cache.p = p;
  if (!train || p == T{0}) return {std::move(input), std::move(cache)};
  if (rng == nullptr) throw ValueError("dropout: train mode requires an RNG stream");
  cache.keep.resize(input.numel());
  const T scale = T{1} / (T{1} - p);
  T* x = input.data();
  for (std::size_t i = 0; i < input.numel(); ++i) {
    cache.keep[i] = rng->uniform() >= static_cast<double>(p);
    x[i] = cache.keep[i] ? x[i] * scale : T{0};
  }
  return {std::move(input), std::move(cache)};
}

template <typename T>
Tensor<T> dropout_backward(Tensor<T> grad_out, const DropoutCache<T>& cache) {
  if (cache.keep.empty()) return grad_out;  // eval or p == 0
  if (grad_out.numel() != cache.keep.size()) {
    throw ShapeError("dropout_backward: grad size does not match the cached forward call");
  }
  const T scale = T{1} / (T{1} - cache.p);
  T* g = grad_out.data();
  for (std::size_t i = 0; i < grad_out.numel(); ++i) g[i] = cache.keep[i] ? g[i] * scale : T{0};
  return grad_out;
}

// ---------------------------------------------------------------- softmax

// Row-wise softmax over the class axis of [B,K], log-sum-exp stabilized.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax: logits must be rank 2, got " + logits.shape_string());
  const std::size_t b_n = logits.dim(0), k_n = logits.dim(1);
  Tensor<T> out({b_n, k_n});
  for (std::size_t b = 0; b < b_n; ++b) {
    const T* z = logits.data() + b * k_n;
    T* y = out.data() + b * k_n;
    const T zmax = *std::max_element(z, z + k_n);
    T denom{0};
    for (std::size_t j = 0; j < k_n; ++j) {
      y[j] = std::exp(z[j] - zmax);
      denom += y[j];
    }
    for (std::size_t j = 0; j < k_n; ++j) y[j] /= denom;
  }
  return out;
}

// dz = y .* (dy - sum(dy .* y)) per row, where y = softmax(z).
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& grad_out, const Tensor<T>& softmax_out) {
  if (!grad_out.same_shape(softmax_out)) {
    throw ShapeError("softmax_backward: grad shape " + grad_out.shape_string() +
                     " does not match output shape " + softmax_out.shape_string());
  }
  const std::size_t b_n = softmax_out.dim(0), k_n = softmax_out.dim(1);
  Tensor<T> grad_in({b_n, k_n});
  for (std::size_t b = 0; b < b_n; ++b) {
    const T* dy = grad_out.data() + b * k_n;
    const T* y = softmax_out.data() + b * k_n;
    T dot{0};
    for (std::size_t j = 0; j < k_n; ++j) dot += dy[j] * y[j];
    T* dz = grad_in.data() + b * k_n;
    for (std::size_t j = 0; j < k_n; ++j) dz[j] = y[j] * (dy[j] - dot);
  }
  return grad_in;
}

}  // namespace sgkd
