#include <atomic>
#include <cstdlib>
#include <string>

#include "prefnet/error.hpp"
#include "reference.hpp"
#include "table.hpp"

namespace prefnet::kernels {
namespace {

bool cpu_has(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

const detail::FloatKernels* table_for(Isa isa) {
  switch (isa) {
    case Isa::avx2:
      return detail::avx2_table();
    case Isa::neon:
      return detail::neon_table();
    case Isa::scalar:
      break;
  }
  return &detail::scalar_table();
}

Isa initial_isa() {
  if (const char* env = std::getenv("PREFNET_ISA")) {
    const std::string want(env);
    if (want == "scalar") return Isa::scalar;
    if (want == "avx2" && cpu_has(Isa::avx2)) return Isa::avx2;
    if (want == "neon" && cpu_has(Isa::neon)) return Isa::neon;
  }
  return detected_isa();
}

struct State {
  std::atomic<Isa> isa{initial_isa()};
  std::atomic<const detail::FloatKernels*> table{table_for(isa.load())};
};

State& state() {
  static State s;
  return s;
}

const detail::FloatKernels& k() { return *state().table.load(std::memory_order_relaxed); }

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

Isa detected_isa() {
  if (cpu_has(Isa::avx2)) return Isa::avx2;
  if (cpu_has(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

bool isa_supported(Isa isa) { return cpu_has(isa); }

Isa active_isa() { return state().isa.load(); }

void set_isa(Isa isa) {
  if (!cpu_has(isa)) {
    throw ConfigError("kernel variant " + std::string(isa_name(isa)) +
                      " is not available on this machine");
  }
  state().isa.store(isa);
  state().table.store(table_for(isa));
}

void gemm(const GemmArgs& args, const float* a, const float* b, float* c) { k().gemm(args, a, b, c); }
void gemm(const GemmArgs& args, const double* a, const double* b, double* c) {
  reference::gemm(args, a, b, c);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) { k().axpy(n, alpha, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) { reference::axpy(n, alpha, x, y); }

void relu_forward(std::size_t n, const float* x, float* y) { k().relu_forward(n, x, y); }
void relu_forward(std::size_t n, const double* x, double* y) { reference::relu_forward(n, x, y); }

void relu_backward(std::size_t n, const float* x, const float* gy, float* gx) {
  k().relu_backward(n, x, gy, gx);
}
void relu_backward(std::size_t n, const double* x, const double* gy, double* gx) {
  reference::relu_backward(n, x, gy, gx);
}

void multiply(std::size_t n, const float* x, const float* mask, float* y) { k().multiply(n, x, mask, y); }
void multiply(std::size_t n, const double* x, const double* mask, double* y) {
  reference::multiply(n, x, mask, y);
}

double sum(std::size_t n, const float* x) { return k().sum(n, x); }
double sum(std::size_t n, const double* x) { return reference::sum(n, x); }

void sgd_momentum(std::size_t n, const SgdArgs& args, float* w, const float* g, float* v) {
  k().sgd_momentum(n, args, w, g, v);
}

}  // namespace prefnet::kernels
