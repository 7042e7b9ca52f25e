#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "sgkd/core/tensor.hpp"

namespace sgkd {

template <typename T>
struct AdamConfig {
  T lr = T(1e-2);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(0);
};

// Bias-corrected Adam over a named parameter map. L2 weight decay is added to
// the gradient of decayed parameters before the moment update; which
// parameters decay is the caller's choice (convolution/linear weights only in
// this project, never biases or batch-norm gamma/beta).
template <typename T>
class AdamState {
 public:
  explicit AdamState(AdamConfig<T> cfg = {}) : cfg_(cfg) {}

  const AdamConfig<T>& config() const { return cfg_; }
  std::uint64_t step_count() const { return step_; }
  const Tensor<T>& first_moment(const std::string& name) const { return m_.at(name); }
  const Tensor<T>& second_moment(const std::string& name) const { return v_.at(name); }

  void step(std::map<std::string, Tensor<T>>& params,
            const std::map<std::string, Tensor<T>>& grads,
            const std::set<std::string>& decayed) {
    step_ += 1;
    const T bc1 = T{1} - std::pow(cfg_.beta1, static_cast<T>(step_));
    const T bc2 = T{1} - std::pow(cfg_.beta2, static_cast<T>(step_));
    for (auto& [name, p] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) throw ValueError("adam: missing gradient for parameter " + name);
      const Tensor<T>& g = git->second;
      if (!g.same_shape(p)) {
        throw ShapeError("adam: gradient shape " + g.shape_string() + " does not match parameter " +
                         name + " " + p.shape_string());
      }
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (!std::isfinite(g[i])) {
          throw NumericError("adam: non-finite gradient in parameter " + name + " at index " +
                             std::to_string(i));
        }
      }
      Tensor<T>& m = moment(m_, name, p);
      Tensor<T>& v = moment(v_, name, p);
      const bool decay = cfg_.weight_decay != T{0} && decayed.count(name) > 0;
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const T gi = decay ? g[i] + cfg_.weight_decay * p[i] : g[i];
        m[i] = cfg_.beta1 * m[i] + (T{1} - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (T{1} - cfg_.beta2) * gi * gi;
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  static Tensor<T>& moment(std::map<std::string, Tensor<T>>& store, const std::string& name,
                           const Tensor<T>& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<T>(like.shape())).first;
    return it->second;
  }

  AdamConfig<T> cfg_;
  std::uint64_t step_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

}  // namespace sgkd
