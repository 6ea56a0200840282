// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include "table.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include "blocked_gemm.hpp"

namespace {

struct Avx2Micro {
  static constexpr std::size_t kRows = 6;
  static constexpr std::size_t kCols = 16;

  static void run(std::size_t kc, const float* ap, const float* bp, std::size_t bstep, float* c,
                  std::size_t ldc,
                  std::size_t rows, std::size_t cols) {
    __m256 acc[kRows][2];
    for (auto& row : acc) row[0] = row[1] = _mm256_setzero_ps();
    for (std::size_t p = 0; p < kc; ++p) {
      const __m256 b0 = _mm256_loadu_ps(bp);
      const __m256 b1 = _mm256_loadu_ps(bp + 8);
      for (std::size_t r = 0; r < kRows; ++r) {
        const __m256 av = _mm256_broadcast_ss(ap + r);
        acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
        acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
      }
      ap += kRows;
      bp += bstep;
    }
    if (rows == kRows && cols == kCols) {
      for (std::size_t r = 0; r < kRows; ++r) {
        float* crow = c + r * ldc;
        _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[r][0]));
        _mm256_storeu_ps(crow + 8, _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[r][1]));
      }
      return;
    }
    alignas(32) float tile[kRows][kCols];
    for (std::size_t r = 0; r < kRows; ++r) {
      _mm256_store_ps(tile[r], acc[r][0]);
      _mm256_store_ps(tile[r] + 8, acc[r][1]);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r][j];
    }
  }
};

void gemm_avx2(const prefnet::kernels::GemmArgs& g, const float* a, const float* b, float* c) {
  blocked_gemm<Avx2Micro>(g, a, b, c);
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_forward_avx2(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_avx2(std::size_t n, const float* x, const float* gy, float* gx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 positive = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(gx + i, _mm256_and_ps(positive, _mm256_loadu_ps(gy + i)));
  }
  for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}

void multiply_avx2(std::size_t n, const float* x, const float* mask, float* y) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(mask + i)));
  }
  for (; i < n; ++i) y[i] = x[i] * mask[i];
}

double sum_avx2(std::size_t n, const float* x) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += static_cast<double>(x[i]);
  return s;
}

void sgd_momentum_avx2(std::size_t n, const prefnet::kernels::SgdArgs& s, float* w, const float* g,
                       float* v) {
  const __m256 lr = _mm256_set1_ps(s.lr);
  const __m256 mu = _mm256_set1_ps(s.momentum);
  const __m256 decay = _mm256_set1_ps(s.decay);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 wv = _mm256_loadu_ps(w + i);
    const __m256 geff = _mm256_fmadd_ps(decay, wv, _mm256_loadu_ps(g + i));
    const __m256 vel = _mm256_fnmadd_ps(lr, geff, _mm256_mul_ps(mu, _mm256_loadu_ps(v + i)));
    _mm256_storeu_ps(v + i, vel);
    _mm256_storeu_ps(w + i, _mm256_add_ps(wv, vel));
  }
  for (; i < n; ++i) {
    const float geff = g[i] + s.decay * w[i];
    v[i] = s.momentum * v[i] - s.lr * geff;
    w[i] += v[i];
  }
}

}  // namespace

namespace prefnet::kernels::detail {

const FloatKernels* avx2_table() {
  static const FloatKernels table{
      &gemm_avx2,     &axpy_avx2, &relu_forward_avx2,  &relu_backward_avx2,
      &multiply_avx2, &sum_avx2,  &sgd_momentum_avx2,
  };
  return &table;
}

}  // namespace prefnet::kernels::detail

#else

namespace prefnet::kernels::detail {
const FloatKernels* avx2_table() { return nullptr; }
}  // namespace prefnet::kernels::detail

#endif
