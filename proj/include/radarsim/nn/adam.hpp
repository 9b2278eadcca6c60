#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "radarsim/nn/tensor.hpp"

namespace radarsim::nn {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per parameter-group optimizer state; the moment buffers live inside each
// Param, the shared step count lives here.
struct AdamGroup {
  uint64_t t = 0;
};

template <typename T>
inline void adam_step(const std::vector<Param<T>*>& params, const AdamConfig& cfg,
                      AdamGroup& group) {
  group.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(group.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(group.t));
  const T lr = static_cast<T>(cfg.learning_rate);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  const T ibc1 = static_cast<T>(1.0 / bc1);
  const T ibc2 = static_cast<T>(1.0 / bc2);
  for (Param<T>* p : params) {
    T* val = p->val.v.data();
    T* g = p->grad.v.data();
    T* m = p->m.v.data();
    T* v = p->v.v.data();
    const size_t n = p->val.numel();
    for (size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mhat = m[k] * ibc1;
      const T vhat = v[k] * ibc2;
      val[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template <typename T>
inline void zero_grads(const std::vector<Param<T>*>& params) {
  for (Param<T>* p : params) p->zero_grad();
}

}  // namespace radarsim::nn
