#pragma once

#include <cmath>
#include <span>

#include "sgkd/core/tensor.hpp"
#include "sgkd/nn/activations.hpp"

namespace sgkd {

template <typename T>
struct LossResult {
  T loss{0};
  Tensor<T> grad_logits;
};

// Mean negative log-likelihood over the batch, computed with the log-sum-exp
// trick. grad = (softmax - one_hot) / B.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be rank 2, got " + logits.shape_string());
  const std::size_t b_n = logits.dim(0), k_n = logits.dim(1);
  if (targets.size() != b_n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for batch of " +
                     std::to_string(b_n));
  }
  for (std::size_t b = 0; b < b_n; ++b) {
    if (targets[b] < 0 || static_cast<std::size_t>(targets[b]) >= k_n) {
      throw ValueError("cross_entropy: target " + std::to_string(targets[b]) +
                       " out of range [0," + std::to_string(k_n) + ") at row " + std::to_string(b));
    }
  }

  LossResult<T> res;
  res.grad_logits = softmax(logits);
  T total{0};
  for (std::size_t b = 0; b < b_n; ++b) {
    const T* z = logits.data() + b * k_n;
    const T zmax = *std::max_element(z, z + k_n);
    T lse{0};
    for (std::size_t j = 0; j < k_n; ++j) lse += std::exp(z[j] - zmax);
    lse = std::log(lse) + zmax;
    total += lse - z[targets[b]];
  }
  res.loss = total / static_cast<T>(b_n);
  T* g = res.grad_logits.data();
  const T inv_b = T{1} / static_cast<T>(b_n);
  for (std::size_t b = 0; b < b_n; ++b) {
    g[b * k_n + static_cast<std::size_t>(targets[b])] -= T{1};
    for (std::size_t j = 0; j < k_n; ++j) g[b * k_n + j] *= inv_b;
  }
  return res;
}

// Average of cross-entropy and the squared error of the probability-weighted
// expected grade: loss = CE/2 + mean((sum_j j*p_j - target)^2)/2.
template <typename T>
LossResult<T> combined_ce_mse(const Tensor<T>& logits, std::span<const int> targets) {
  LossResult<T> ce = cross_entropy(logits, targets);
  const std::size_t b_n = logits.dim(0), k_n = logits.dim(1);
  Tensor<T> probs = softmax(logits);

  LossResult<T> res;
  res.grad_logits = Tensor<T>({b_n, k_n});
  T mse{0};
  const T inv_b = T{1} / static_cast<T>(b_n);
  for (std::size_t b = 0; b < b_n; ++b) {
    const T* p = probs.data() + b * k_n;
    T expected{0};
    for (std::size_t j = 0; j < k_n; ++j) expected += static_cast<T>(j) * p[j];
    const T err = expected - static_cast<T>(targets[b]);
    mse += err * err;
    // d expected / d z_k = p_k * (k - expected)
    T* g = res.grad_logits.data() + b * k_n;
    for (std::size_t j = 0; j < k_n; ++j) {
      g[j] = T{2} * err * p[j] * (static_cast<T>(j) - expected) * inv_b;
    }
  }
  mse *= inv_b;
  res.loss = T(0.5) * ce.loss + T(0.5) * mse;
  for (std::size_t i = 0; i < res.grad_logits.numel(); ++i) {
    res.grad_logits[i] = T(0.5) * ce.grad_logits[i] + T(0.5) * res.grad_logits[i];
  }
  return res;
}

}  // namespace sgkd
