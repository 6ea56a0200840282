#pragma once

#include "prefnet/kernels.hpp"

namespace prefnet::kernels::detail {

struct FloatKernels {
  void (*gemm)(const GemmArgs&, const float*, const float*, float*);
  void (*axpy)(std::size_t, float, const float*, float*);
  void (*relu_forward)(std::size_t, const float*, float*);
  void (*relu_backward)(std::size_t, const float*, const float*, float*);
  void (*multiply)(std::size_t, const float*, const float*, float*);
  double (*sum)(std::size_t, const float*);
  void (*sgd_momentum)(std::size_t, const SgdArgs&, float*, const float*, float*);
};

const FloatKernels& scalar_table();
// nullptr when the variant is not compiled into this build.
const FloatKernels* avx2_table();
const FloatKernels* neon_table();

}  // namespace prefnet::kernels::detail
