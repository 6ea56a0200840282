#pragma once

// Data-parallel inner loops used by the layer library. Every kernel has a
// scalar reference implementation; float kernels additionally have AVX2/FMA
// (x86-64) and NEON (aarch64) variants selected once at startup from the CPU
// features. The double overloads always run the scalar reference and exist
// for the 64-bit verification path.
//
// Setting PREFNET_ISA=scalar in the environment pins the scalar path.

#include <cstddef>
#include <string_view>

namespace prefnet::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);
/// Best variant supported by both the build and the running CPU.
Isa detected_isa();
Isa active_isa();
bool isa_supported(Isa isa);
/// Switches the float kernels; throws ConfigError when unsupported.
void set_isa(Isa isa);

/// RAII switch used by the equivalence tests.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : saved_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(saved_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa saved_;
};

/// Row-major GEMM: C[m,n] = op(A)[m,k] * op(B)[k,n], plus C when `accumulate`.
/// op(A) is A^T when `trans_a` (A then stored k x m with leading dimension lda).
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0, n = 0, k = 0;
  std::size_t lda = 0, ldb = 0, ldc = 0;
  bool accumulate = false;
};

void gemm(const GemmArgs& args, const float* a, const float* b, float* c);
void gemm(const GemmArgs& args, const double* a, const double* b, double* c);

/// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

/// y = max(x, 0)
void relu_forward(std::size_t n, const float* x, float* y);
void relu_forward(std::size_t n, const double* x, double* y);

/// gx = x > 0 ? gy : 0
void relu_backward(std::size_t n, const float* x, const float* gy, float* gx);
void relu_backward(std::size_t n, const double* x, const double* gy, double* gx);

/// y = x * mask (dropout masks hold 0 or the survivor scale)
void multiply(std::size_t n, const float* x, const float* mask, float* y);
void multiply(std::size_t n, const double* x, const double* mask, double* y);

/// Sum of x, accumulated in double.
double sum(std::size_t n, const float* x);
double sum(std::size_t n, const double* x);

/// Momentum SGD over one parameter group:
///   g' = g + decay * w;  v = momentum * v - lr * g';  w = w + v
/// where `decay` is 2*l2 for weights and 0 for biases.
struct SgdArgs {
  float lr = 0.0f;
  float momentum = 0.0f;
  float decay = 0.0f;
};
void sgd_momentum(std::size_t n, const SgdArgs& args, float* w, const float* g, float* v);

}  // namespace prefnet::kernels
