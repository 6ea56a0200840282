#pragma once

// Scalar reference kernels, shared by the float scalar table and the double
// overloads.

#include <algorithm>
#include <cstddef>

#include "prefnet/kernels.hpp"

namespace prefnet::kernels::reference {

template <typename T>
void gemm(const GemmArgs& g, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < g.m; ++i) {
    T* crow = c + i * g.ldc;
    if (!g.accumulate) std::fill(crow, crow + g.n, T{0});
    for (std::size_t p = 0; p < g.k; ++p) {
      const T av = g.trans_a ? a[p * g.lda + i] : a[i * g.lda + p];
      if (g.trans_b) {
        for (std::size_t j = 0; j < g.n; ++j) crow[j] += av * b[j * g.ldb + p];
      } else {
        const T* brow = b + p * g.ldb;
        for (std::size_t j = 0; j < g.n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void axpy(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu_forward(std::size_t n, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
void relu_backward(std::size_t n, const T* x, const T* gy, T* gx) {
  for (std::size_t i = 0; i < n; ++i) gx[i] = x[i] > T{0} ? gy[i] : T{0};
}

template <typename T>
void multiply(std::size_t n, const T* x, const T* mask, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * mask[i];
}

template <typename T>
double sum(std::size_t n, const T* x) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(x[i]);
  return s;
}

inline void sgd_momentum(std::size_t n, const SgdArgs& s, float* w, const float* g, float* v) {
  for (std::size_t i = 0; i < n; ++i) {
    const float geff = g[i] + s.decay * w[i];
    v[i] = s.momentum * v[i] - s.lr * geff;
    w[i] += v[i];
  }
}

}  // namespace prefnet::kernels::reference
