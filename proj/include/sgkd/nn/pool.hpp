#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "sgkd/core/tensor.hpp"

namespace sgkd {

// 2x2 max-pooling with stride 2. A trailing odd row/column is discarded.
// Ties route to the first maximal element in row-major window order, which
// keeps the backward pass deterministic.

template <typename T>
struct MaxPool2dCache {
  std::array<std::size_t, 4> in_shape{};
  std::array<std::size_t, 4> out_shape{};
  std::vector<std::uint32_t> argmax;  // flat h*W+w index into the input plane, per output element
};

template <typename T>
std::pair<Tensor<T>, MaxPool2dCache<T>> maxpool2d_forward(const Tensor<T>& input) {
  if (input.rank() != 4) throw ShapeError("maxpool2d: input must be rank 4, got " + input.shape_string());
  const std::size_t b_n = input.dim(0), c_n = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < 2 || w < 2) {
    throw ShapeError("maxpool2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                     " smaller than the 2x2 window");
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor<T> out({b_n, c_n, oh, ow});
  MaxPool2dCache<T> cache;
  cache.in_shape = {b_n, c_n, h, w};
  cache.out_shape = {b_n, c_n, oh, ow};
  cache.argmax.resize(b_n * c_n * oh * ow);

  std::size_t oi = 0;
  for (std::size_t bc = 0; bc < b_n * c_n; ++bc) {
    const T* plane = input.data() + bc * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x, ++oi) {
        const std::size_t base = (2 * y) * w + 2 * x;
        std::uint32_t best = static_cast<std::uint32_t>(base);
        T best_v = plane[base];
        const std::size_t cand[3] = {base + 1, base + w, base + w + 1};
        for (std::size_t idx : cand) {
          if (plane[idx] > best_v) {
            best_v = plane[idx];
            best = static_cast<std::uint32_t>(idx);
          }
        }
        out[oi] = best_v;
        cache.argmax[oi] = best;
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_out, const MaxPool2dCache<T>& cache) {
  const auto& os = cache.out_shape;
  require_shape(grad_out, {os[0], os[1], os[2], os[3]}, "maxpool2d_backward grad_out");
  const auto& is = cache.in_shape;
  Tensor<T> grad_in({is[0], is[1], is[2], is[3]});
  const std::size_t in_plane = is[2] * is[3];
  const std::size_t out_plane = os[2] * os[3];
  for (std::size_t bc = 0; bc < is[0] * is[1]; ++bc) {
    T* gi = grad_in.data() + bc * in_plane;
    const T* go = grad_out.data() + bc * out_plane;
    const std::uint32_t* am = cache.argmax.data() + bc * out_plane;
    for (std::size_t i = 0; i < out_plane; ++i) gi[am[i]] += go[i];
  }
  return grad_in;
}

}  // namespace sgkd
