#include "reference.hpp"
#include "table.hpp"

namespace prefnet::kernels::detail {

const FloatKernels& scalar_table() {
  static const FloatKernels table{
      &reference::gemm<float>,          &reference::axpy<float>,
      &reference::relu_forward<float>,  &reference::relu_backward<float>,
      &reference::multiply<float>,      &reference::sum<float>,
      &reference::sgd_momentum,
  };
  return table;
}

}  // namespace prefnet::kernels::detail
