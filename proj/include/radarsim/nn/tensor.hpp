#pragma once

#include <cblas.h>
#include <dlfcn.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "radarsim/rng.hpp"

namespace radarsim::nn {

namespace detail {

#if defined(__x86_64__)
// Hypervisors that mask the CPU model string make OpenBLAS's runtime
// detection fall back to a generic kernel several times slower than what the
// hardware can run. OPENBLAS_CORETYPE overrides the detection but is only
// read while the library initializes, so it must be set before the load.
// CPUID is consulted directly; an already-set OPENBLAS_CORETYPE always wins.
inline void select_blas_coretype() {
  if (std::getenv("OPENBLAS_CORETYPE") != nullptr) return;
  unsigned eax, ebx, ecx, edx;
  __asm__ volatile("cpuid" : "=a"(eax), "=b"(ebx), "=c"(ecx), "=d"(edx) : "a"(1u), "c"(0u));
  const bool osxsave = (ecx >> 27) & 1u;
  const bool avx = (ecx >> 28) & 1u;
  const bool fma = (ecx >> 12) & 1u;
  if (!osxsave || !avx) return;
  unsigned xlo, xhi;
  __asm__ volatile("xgetbv" : "=a"(xlo), "=d"(xhi) : "c"(0u));
  const bool ymm_ok = (xlo & 0x6u) == 0x6u;
  const bool zmm_ok = (xlo & 0xe6u) == 0xe6u;
  __asm__ volatile("cpuid" : "=a"(eax), "=b"(ebx), "=c"(ecx), "=d"(edx) : "a"(7u), "c"(0u));
  const bool avx2 = (ebx >> 5) & 1u;
  const bool avx512 = ((ebx >> 16) & 1u) && ((ebx >> 17) & 1u) && ((ebx >> 30) & 1u) &&
                      ((ebx >> 31) & 1u);  // F, DQ, BW, VL
  if (zmm_ok && avx512)
    ::setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 1);
  else if (ymm_ok && avx2 && fma)
    ::setenv("OPENBLAS_CORETYPE", "HASWELL", 1);
}
#else
inline void select_blas_coretype() {}
#endif

// OpenBLAS is loaded lazily at the first GEMM instead of being linked as a
// startup dependency: its initializer reads OPENBLAS_CORETYPE, and the only
// way to run select_blas_coretype first is to own the moment of loading.
// Threads are pinned to one here as well, so GEMM summation order, and
// therefore every trained parameter, never depends on the machine's core
// count.
struct BlasApi {
  decltype(&cblas_sgemm) sgemm = nullptr;
  decltype(&cblas_dgemm) dgemm = nullptr;
};

inline const BlasApi& blas() {
  static const BlasApi api = [] {
    select_blas_coretype();
    void* h = ::dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (h == nullptr) h = ::dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (h == nullptr) throw std::runtime_error("cannot load OpenBLAS: " + std::string(dlerror()));
    BlasApi a;
    a.sgemm = reinterpret_cast<decltype(&cblas_sgemm)>(::dlsym(h, "cblas_sgemm"));
    a.dgemm = reinterpret_cast<decltype(&cblas_dgemm)>(::dlsym(h, "cblas_dgemm"));
    auto set_threads = reinterpret_cast<void (*)(int)>(::dlsym(h, "openblas_set_num_threads"));
    if (a.sgemm == nullptr || a.dgemm == nullptr)
      throw std::runtime_error("OpenBLAS is missing cblas entry points");
    if (set_threads != nullptr) set_threads(1);
    return a;
  }();
  return api;
}

}  // namespace detail

inline void pin_blas_single_thread() { detail::blas(); }

// Dense NCHW tensor. T is float at runtime; tests instantiate double for
// finite-difference gradient checks.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

  size_t numel() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  void zero() { std::fill(v.begin(), v.end(), T(0)); }

  T* plane(int in, int ic) {
    return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }
  const T* plane(int in, int ic) const {
    return v.data() + (static_cast<size_t>(in) * c + ic) * h * w;
  }
  T& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  T at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
  }
};

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  detail::blas().sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                       tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                       ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                 const double* b, int ldb, double beta, double* c, int ldc) {
  detail::blas().dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                       tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                       ldc);
}

// A learnable tensor with its gradient and Adam moment buffers.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> val, grad, m, v;

  void alloc(int n, int c, int h, int w, std::string name_) {
    name = std::move(name_);
    val = Tensor<T>(n, c, h, w);
    grad = Tensor<T>(n, c, h, w);
    m = Tensor<T>(n, c, h, w);
    v = Tensor<T>(n, c, h, w);
  }

  void fill_normal(Rng& rng, double mean, double stddev) {
    for (T& x : val.v) x = static_cast<T>(rng.normal(mean, stddev));
  }

  void zero_grad() { grad.zero(); }
};

}  // namespace radarsim::nn
