#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "sgkd/core/tensor.hpp"
#include "sgkd/nn/gemm.hpp"

namespace sgkd {

// 2-D convolution (cross-correlation), no padding:
//   out[b,f,oh,ow] = bias[f] + sum_{c,i,j} in[b,c,oh*stride+i,ow*stride+j] * ker[f,c,i,j]
// Implemented as per-sample im2col + GEMM. The backward pass recomputes the
// column matrix from the cached input instead of holding it for the whole batch.

template <typename T>
struct Conv2dCache {
  Tensor<T> input;  // [B,C,H,W]
  std::array<std::size_t, 4> kernel_shape{};
  std::array<std::size_t, 4> out_shape{};
  std::size_t stride = 1;
};

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

namespace detail {

// cols is [C*k*k, OH*OW] row-major.
template <typename T>
void im2col(const T* in, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t oh, std::size_t ow, T* cols) {
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = cols + ((c * k + ki) * k + kj) * (oh * ow);
        const T* src = in + c * h * w + ki * w + kj;
        for (std::size_t y = 0; y < oh; ++y) {
          const T* row = src + y * stride * w;
          for (std::size_t x = 0; x < ow; ++x) dst[y * ow + x] = row[x * stride];
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
                std::size_t stride, std::size_t oh, std::size_t ow, T* in_grad) {
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = cols + ((c * k + ki) * k + kj) * (oh * ow);
        T* dst = in_grad + c * h * w + ki * w + kj;
        for (std::size_t y = 0; y < oh; ++y) {
          T* row = dst + y * stride * w;
          for (std::size_t x = 0; x < ow; ++x) row[x * stride] += src[y * ow + x];
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
std::pair<Tensor<T>, Conv2dCache<T>> conv2d_forward(Tensor<T> input, const Tensor<T>& kernels,
                                                    const Tensor<T>& bias, std::size_t stride) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be rank 4, got " + input.shape_string());
  if (kernels.rank() != 4) throw ShapeError("conv2d: kernels must be rank 4, got " + kernels.shape_string());
  if (kernels.dim(2) != kernels.dim(3)) throw ShapeError("conv2d: kernels must be square");
  if (stride == 0) throw ValueError("conv2d: stride must be positive");
  const std::size_t b_n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f_n = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != c_in) {
    throw ShapeError("conv2d: input channels " + std::to_string(c_in) +
                     " do not match kernel channels " + std::to_string(kernels.dim(1)) +
                     " (input " + input.shape_string() + ", kernels " + kernels.shape_string() + ")");
  }
  require_shape(bias, {f_n}, "conv2d bias");
  if (h < k || w < k) {
    throw ShapeError("conv2d: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than kernel " + std::to_string(k));
  }
  const std::size_t oh = (h - k) / stride + 1;
  const std::size_t ow = (w - k) / stride + 1;

  Tensor<T> out({b_n, f_n, oh, ow});
  std::vector<T> cols(c_in * k * k * oh * ow);
  const std::size_t plane = oh * ow;
  for (std::size_t b = 0; b < b_n; ++b) {
    detail::im2col(input.data() + b * c_in * h * w, c_in, h, w, k, stride, oh, ow, cols.data());
    // out_b[F, OH*OW] = kernels[F, C*k*k] * cols
    gemm(false, false, static_cast<int>(f_n), static_cast<int>(plane),
         static_cast<int>(c_in * k * k), T{1}, kernels.data(), static_cast<int>(c_in * k * k),
         cols.data(), static_cast<int>(plane), T{0}, out.data() + b * f_n * plane,
         static_cast<int>(plane));
    for (std::size_t f = 0; f < f_n; ++f) {
      T* o = out.data() + (b * f_n + f) * plane;
      const T bf = bias[f];
      for (std::size_t i = 0; i < plane; ++i) o[i] += bf;
    }
  }

  Conv2dCache<T> cache;
  cache.kernel_shape = {f_n, c_in, k, k};
  cache.out_shape = {b_n, f_n, oh, ow};
  cache.stride = stride;
  cache.input = std::move(input);
  return {std::move(out), std::move(cache)};
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Conv2dCache<T>& cache,
                               const Tensor<T>& kernels, bool need_grad_input = true) {
  const auto& os = cache.out_shape;
  require_shape(grad_out, {os[0], os[1], os[2], os[3]}, "conv2d_backward grad_out");
  if (kernels.shape() != std::vector<std::size_t>{cache.kernel_shape.begin(), cache.kernel_shape.end()}) {
    throw ShapeError("conv2d_backward: kernels do not match the cached forward call");
  }
  const std::size_t b_n = os[0], f_n = os[1], oh = os[2], ow = os[3];
  const std::size_t c_in = cache.kernel_shape[1], k = cache.kernel_shape[2];
  const std::size_t h = cache.input.dim(2), w = cache.input.dim(3);
  const std::size_t stride = cache.stride;
  const std::size_t plane = oh * ow;
  const std::size_t ckk = c_in * k * k;

  Conv2dGrads<T> g;
  g.kernels = Tensor<T>({f_n, c_in, k, k});
  g.bias = Tensor<T>({f_n});
  if (need_grad_input) g.input = Tensor<T>({b_n, c_in, h, w});

  std::vector<T> cols(ckk * plane);
  std::vector<T> grad_cols(need_grad_input ? ckk * plane : 0);

  for (std::size_t b = 0; b < b_n; ++b) {
    const T* go = grad_out.data() + b * f_n * plane;
    detail::im2col(cache.input.data() + b * c_in * h * w, c_in, h, w, k, stride, oh, ow,
                   cols.data());
    // dK[F, C*k*k] += go[F, plane] * cols[C*k*k, plane]^T
    gemm(false, true, static_cast<int>(f_n), static_cast<int>(ckk), static_cast<int>(plane), T{1},
         go, static_cast<int>(plane), cols.data(), static_cast<int>(plane), T{1}, g.kernels.data(),
         static_cast<int>(ckk));
    if (need_grad_input) {
      // dcols[C*k*k, plane] = kernels[F, C*k*k]^T * go[F, plane]
      gemm(true, false, static_cast<int>(ckk), static_cast<int>(plane), static_cast<int>(f_n),
           T{1}, kernels.data(), static_cast<int>(ckk), go, static_cast<int>(plane), T{0},
           grad_cols.data(), static_cast<int>(plane));
      detail::col2im_add(grad_cols.data(), c_in, h, w, k, stride, oh, ow,
                         g.input.data() + b * c_in * h * w);
    }
    for (std::size_t f = 0; f < f_n; ++f) {
      T s{0};
      const T* row = go + f * plane;
      for (std::size_t i = 0; i < plane; ++i) s += row[i];
      g.bias[f] += s;
    }
  }
  return g;
}

}  // namespace sgkd
