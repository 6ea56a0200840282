#pragma once

// Cache-blocked GEMM driver shared by the SIMD variants. The micro-kernel
// policy supplies the register tile (MR x NR) and must add its tile into C.
// A row-major B is read in place for full-width panels; only a ragged last
// panel or a transposed B gets packed.
// Included only from translation units compiled for the matching ISA, so
// everything here has internal linkage.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#include "prefnet/kernels.hpp"

namespace {

constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockN = 2048;

inline void pack_a(const prefnet::kernels::GemmArgs& g, const float* a, std::size_t i0,
                   std::size_t mc, std::size_t p0, std::size_t kc, std::size_t mr,
                   float* out) {
  for (std::size_t ir = 0; ir < mc; ir += mr) {
    const std::size_t rows = std::min(mr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < mr; ++r) {
        float v = 0.0f;
        if (r < rows) {
          const std::size_t i = i0 + ir + r;
          const std::size_t k = p0 + p;
          v = g.trans_a ? a[k * g.lda + i] : a[i * g.lda + k];
        }
        *out++ = v;
      }
    }
  }
}

inline void pack_b(const prefnet::kernels::GemmArgs& g, const float* b, std::size_t p0,
                   std::size_t kc, std::size_t j0, std::size_t nc, std::size_t nr,
                   float* out) {
  for (std::size_t jr = 0; jr < nc; jr += nr) {
    const std::size_t cols = std::min(nr, nc - jr);
    float* panel = out + jr * kc;
    if (!g.trans_b) {
      for (std::size_t p = 0; p < kc; ++p) {
        const float* src = b + (p0 + p) * g.ldb + j0 + jr;
        float* dst = panel + p * nr;
        std::memcpy(dst, src, cols * sizeof(float));
        std::fill(dst + cols, dst + nr, 0.0f);
      }
    } else {
      if (cols < nr) std::fill(panel, panel + kc * nr, 0.0f);
      for (std::size_t c = 0; c < cols; ++c) {
        const float* src = b + (j0 + jr + c) * g.ldb + p0;
        for (std::size_t p = 0; p < kc; ++p) panel[p * nr + c] = src[p];
      }
    }
  }
}

template <typename Micro>
void blocked_gemm(const prefnet::kernels::GemmArgs& g, const float* a, const float* b,
                  float* c) {
  constexpr std::size_t mr = Micro::kRows;
  constexpr std::size_t nr = Micro::kCols;
  constexpr std::size_t block_m = mr * 16;

  if (!g.accumulate) {
    for (std::size_t i = 0; i < g.m; ++i) std::fill(c + i * g.ldc, c + i * g.ldc + g.n, 0.0f);
  }
  if (g.m == 0 || g.n == 0 || g.k == 0) return;

  thread_local std::vector<float> packed_a;
  thread_local std::vector<float> packed_b;

  for (std::size_t j0 = 0; j0 < g.n; j0 += kBlockN) {
    const std::size_t nc = std::min(kBlockN, g.n - j0);
    const std::size_t nc_padded = (nc + nr - 1) / nr * nr;
    const std::size_t full_cols = g.trans_b ? 0 : nc / nr * nr;
    for (std::size_t p0 = 0; p0 < g.k; p0 += kBlockK) {
      const std::size_t kc = std::min(kBlockK, g.k - p0);
      // Pack whatever cannot be streamed directly.
      if (full_cols < nc) {
        packed_b.resize((nc_padded - full_cols) * kc);
        pack_b(g, b, p0, kc, j0 + full_cols, nc - full_cols, nr, packed_b.data());
      }
      for (std::size_t i0 = 0; i0 < g.m; i0 += block_m) {
        const std::size_t mc = std::min(block_m, g.m - i0);
        const std::size_t mc_padded = (mc + mr - 1) / mr * mr;
        packed_a.resize(mc_padded * kc);
        pack_a(g, a, i0, mc, p0, kc, mr, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          const std::size_t cols = std::min(nr, nc - jr);
          const bool direct = jr < full_cols;
          const float* bp = direct ? b + p0 * g.ldb + j0 + jr : packed_b.data() + (jr - full_cols) * kc;
          const std::size_t bstep = direct ? g.ldb : nr;
          for (std::size_t ir = 0; ir < mc; ir += mr) {
            const std::size_t rows = std::min(mr, mc - ir);
            Micro::run(kc, packed_a.data() + ir * kc, bp, bstep, c + (i0 + ir) * g.ldc + j0 + jr, g.ldc, rows,
                       cols);
          }
        }
      }
    }
  }
}

}  // namespace
