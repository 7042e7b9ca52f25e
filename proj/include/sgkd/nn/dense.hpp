#pragma once

#include <utility>

#include "sgkd/core/tensor.hpp"
#include "sgkd/nn/gemm.hpp"

namespace sgkd {

// Affine layer: out[B,O] = in[B,I] * W[O,I]^T + bias[O].

template <typename T>
struct DenseCache {
  Tensor<T> input;  // [B,I]
};

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
std::pair<Tensor<T>, DenseCache<T>> dense_forward(Tensor<T> input, const Tensor<T>& weight,
                                                  const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2) {
    throw ShapeError("dense: input and weight must be rank 2");
  }
  const std::size_t b_n = input.dim(0), in_n = input.dim(1), out_n = weight.dim(0);
  if (weight.dim(1) != in_n) {
    throw ShapeError("dense: input features " + std::to_string(in_n) + " do not match weight " +
                     weight.shape_string());
  }
  require_shape(bias, {out_n}, "dense bias");
  Tensor<T> out({b_n, out_n});
  gemm(false, true, static_cast<int>(b_n), static_cast<int>(out_n), static_cast<int>(in_n), T{1},
       input.data(), static_cast<int>(in_n), weight.data(), static_cast<int>(in_n), T{0},
       out.data(), static_cast<int>(out_n));
  for (std::size_t b = 0; b < b_n; ++b) {
    T* row = out.data() + b * out_n;
    for (std::size_t o = 0; o < out_n; ++o) row[o] += bias[o];
  }
  DenseCache<T> cache;
  cache.input = std::move(input);
  return {std::move(out), std::move(cache)};
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_out, const DenseCache<T>& cache,
                             const Tensor<T>& weight) {
  const std::size_t b_n = cache.input.dim(0), in_n = cache.input.dim(1), out_n = weight.dim(0);
  require_shape(grad_out, {b_n, out_n}, "dense_backward grad_out");
  DenseGrads<T> g;
  g.input = Tensor<T>({b_n, in_n});
  g.weight = Tensor<T>({out_n, in_n});
  g.bias = Tensor<T>({out_n});
  // dX = dY * W
  gemm(false, false, static_cast<int>(b_n), static_cast<int>(in_n), static_cast<int>(out_n), T{1},
       grad_out.data(), static_cast<int>(out_n), weight.data(), static_cast<int>(in_n), T{0},
       g.input.data(), static_cast<int>(in_n));
  // dW = dY^T * X
  gemm(true, false, static_cast<int>(out_n), static_cast<int>(in_n), static_cast<int>(b_n), T{1},
       grad_out.data(), static_cast<int>(out_n), cache.input.data(), static_cast<int>(in_n), T{0},
       g.weight.data(), static_cast<int>(in_n));
  for (std::size_t b = 0; b < b_n; ++b) {
    const T* row = grad_out.data() + b * out_n;
    for (std::size_t o = 0; o < out_n; ++o) g.bias[o] += row[o];
  }
  return g;
}

}  // namespace sgkd
