#include "table.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include "blocked_gemm.hpp"

namespace {

struct NeonMicro {
  static constexpr std::size_t kRows = 8;
  static constexpr std::size_t kCols = 8;

  static void run(std::size_t kc, const float* ap, const float* bp, std::size_t bstep, float* c,
                  std::size_t ldc,
                  std::size_t rows, std::size_t cols) {
    float32x4_t acc[kRows][2];
    for (auto& row : acc) row[0] = row[1] = vdupq_n_f32(0.0f);
    for (std::size_t p = 0; p < kc; ++p) {
      const float32x4_t b0 = vld1q_f32(bp);
      const float32x4_t b1 = vld1q_f32(bp + 4);
      const float32x4_t a0 = vld1q_f32(ap);
      const float32x4_t a1 = vld1q_f32(ap + 4);
      acc[0][0] = vfmaq_laneq_f32(acc[0][0], b0, a0, 0);
      acc[0][1] = vfmaq_laneq_f32(acc[0][1], b1, a0, 0);
      acc[1][0] = vfmaq_laneq_f32(acc[1][0], b0, a0, 1);
      acc[1][1] = vfmaq_laneq_f32(acc[1][1], b1, a0, 1);
      acc[2][0] = vfmaq_laneq_f32(acc[2][0], b0, a0, 2);
      acc[2][1] = vfmaq_laneq_f32(acc[2][1], b1, a0, 2);
      acc[3][0] = vfmaq_laneq_f32(acc[3][0], b0, a0, 3);
      acc[3][1] = vfmaq_laneq_f32(acc[3][1], b1, a0, 3);
      acc[4][0] = vfmaq_laneq_f32(acc[4][0], b0, a1, 0);
      acc[4][1] = vfmaq_laneq_f32(acc[4][1], b1, a1, 0);
      acc[5][0] = vfmaq_laneq_f32(acc[5][0], b0, a1, 1);
      acc[5][1] = vfmaq_laneq_f32(acc[5][1], b1, a1, 1);
      acc[6][0] = vfmaq_laneq_f32(acc[6][0], b0, a1, 2);
      acc[6][1] = vfmaq_laneq_f32(acc[6][1], b1, a1, 2);
      acc[7][0] = vfmaq_laneq_f32(acc[7][0], b0, a1, 3);
      acc[7][1] = vfmaq_laneq_f32(acc[7][1], b1, a1, 3);
      ap += kRows;
      bp += bstep;
    }
    float tile[kRows][kCols];
    for (std::size_t r = 0; r < kRows; ++r) {
      vst1q_f32(tile[r], acc[r][0]);
      vst1q_f32(tile[r] + 4, acc[r][1]);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] += tile[r][j];
    }
  }
};

void gemm_neon(const prefnet::kernels::GemmArgs& g, const float* a, const float* b, float* c) {
  blocked_gemm<NeonMicro>(g, a, b, c);
}

void axpy_neon(std::size_t n, float alpha, const float* x, float* y) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void relu_forward_neon(std::size_t n, const float* x, float* y) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    vst1q_f32(y + i, vbslq_f32(vcgtq_f32(v, zero), v, zero));
  }
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_neon(std::size_t n, const float* x, const float* gy, float* gx) {
  const float32x4_t zero = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t positive = vcgtq_f32(vld1q_f32(x + i), zero);
    vst1q_f32(gx + i, vbslq_f32(positive, vld1q_f32(gy + i), zero));
  }
  for (; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
}

void multiply_neon(std::size_t n, const float* x, const float* mask, float* y) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_f32(vld1q_f32(x + i), vld1q_f32(mask + i)));
  for (; i < n; ++i) y[i] = x[i] * mask[i];
}

double sum_neon(std::size_t n, const float* x) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    acc0 = vaddq_f64(acc0, vcvt_f64_f32(vget_low_f32(v)));
    acc1 = vaddq_f64(acc1, vcvt_high_f64_f32(v));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += static_cast<double>(x[i]);
  return s;
}

void sgd_momentum_neon(std::size_t n, const prefnet::kernels::SgdArgs& s, float* w, const float* g,
                       float* v) {
  const float32x4_t lr = vdupq_n_f32(s.lr);
  const float32x4_t mu = vdupq_n_f32(s.momentum);
  const float32x4_t decay = vdupq_n_f32(s.decay);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t wv = vld1q_f32(w + i);
    const float32x4_t geff = vfmaq_f32(vld1q_f32(g + i), decay, wv);
    const float32x4_t vel = vfmsq_f32(vmulq_f32(mu, vld1q_f32(v + i)), lr, geff);
    vst1q_f32(v + i, vel);
    vst1q_f32(w + i, vaddq_f32(wv, vel));
  }
  for (; i < n; ++i) {
    const float geff = g[i] + s.decay * w[i];
    v[i] = s.momentum * v[i] - s.lr * geff;
    w[i] += v[i];
  }
}

}  // namespace

namespace prefnet::kernels::detail {

const FloatKernels* neon_table() {
  static const FloatKernels table{
      &gemm_neon,     &axpy_neon, &relu_forward_neon,  &relu_backward_neon,
      &multiply_neon, &sum_neon,  &sgd_momentum_neon,
  };
  return &table;
}

}  // namespace prefnet::kernels::detail

#else

namespace prefnet::kernels::detail {
const FloatKernels* neon_table() { return nullptr; }
}  // namespace prefnet::kernels::detail

#endif
