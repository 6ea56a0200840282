#include <doctest.h>

#include <cmath>
#include <vector>

#include "prefnet/error.hpp"
#include "prefnet/kernels.hpp"
#include "prefnet/rng.hpp"

using namespace prefnet;
using kernels::Isa;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

// Every vector ISA the host can run; empty on a plain scalar machine.
std::vector<Isa> vector_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (kernels::isa_supported(isa)) out.push_back(isa);
  }
  return out;
}

std::vector<float> gemm_with(Isa isa, const kernels::GemmArgs& g, const std::vector<float>& a,
                             const std::vector<float>& b, std::vector<float> c) {
  kernels::ScopedIsa scope(isa);
  kernels::gemm(g, a.data(), b.data(), c.data());
  return c;
}

}  // namespace

TEST_CASE("scalar is always supported and selectable") {
  CHECK(kernels::isa_supported(Isa::scalar));
  kernels::ScopedIsa scope(Isa::scalar);
  CHECK(kernels::active_isa() == Isa::scalar);
  CHECK(kernels::isa_name(Isa::scalar) == "scalar");
}

TEST_CASE("unsupported isa is a config error") {
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (!kernels::isa_supported(isa)) CHECK_THROWS_AS(kernels::set_isa(isa), ConfigError);
  }
}

TEST_CASE("gemm variants agree with the scalar reference") {
  Rng rng(21);
  const auto isas = vector_isas();
  // Sizes straddle the 8/16-wide register tiles and the cache blocks.
  const std::size_t dims[] = {1, 3, 7, 8, 9, 15, 16, 17, 31, 33, 64, 70, 129, 300};
  for (int t = 0; t < 120; ++t) {
    kernels::GemmArgs g;
    g.m = dims[rng.below(std::size(dims))];
    g.n = dims[rng.below(std::size(dims))];
    g.k = dims[rng.below(std::size(dims))];
    g.trans_a = rng.below(2);
    g.trans_b = rng.below(2);
    g.accumulate = rng.below(2);
    // Padded leading dimensions exercise the stride handling.
    const std::size_t pad = rng.below(3);
    g.lda = (g.trans_a ? g.m : g.k) + pad;
    g.ldb = (g.trans_b ? g.k : g.n) + pad;
    g.ldc = g.n + pad;
    const std::size_t a_rows = g.trans_a ? g.k : g.m, b_rows = g.trans_b ? g.n : g.k;
    auto a = random_vec(a_rows * g.lda, rng);
    auto b = random_vec(b_rows * g.ldb, rng);
    auto c = random_vec(g.m * g.ldc, rng);
    auto want = gemm_with(Isa::scalar, g, a, b, c);

    // Independent triple loop in double for the scalar path itself.
    for (std::size_t i = 0; i < g.m; ++i)
      for (std::size_t j = 0; j < g.n; ++j) {
        double acc = g.accumulate ? c[i * g.ldc + j] : 0.0;
        for (std::size_t p = 0; p < g.k; ++p) {
          const double av = g.trans_a ? a[p * g.lda + i] : a[i * g.lda + p];
          const double bv = g.trans_b ? b[j * g.ldb + p] : b[p * g.ldb + j];
          acc += av * bv;
        }
        CHECK(std::abs(want[i * g.ldc + j] - acc) <= 1e-4 * (1.0 + std::sqrt(static_cast<double>(g.k))));
      }
    for (Isa isa : isas) {
      auto got = gemm_with(isa, g, a, b, c);
      for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = 0; j < g.n; ++j) {
          const float x = got[i * g.ldc + j], y = want[i * g.ldc + j];
          INFO(kernels::isa_name(isa) << " m=" << g.m << " n=" << g.n << " k=" << g.k);
          CHECK(std::abs(x - y) <= 1e-5f * (1.0f + static_cast<float>(g.k)));
        }
      // Padding columns of C are never written.
      for (std::size_t i = 0; i < g.m; ++i)
        for (std::size_t j = g.n; j < g.ldc; ++j) CHECK(got[i * g.ldc + j] == c[i * g.ldc + j]);
    }
  }
}

TEST_CASE("gemm is deterministic per isa") {
  Rng rng(22);
  kernels::GemmArgs g{false, false, 37, 53, 71, 71, 53, 53, false};
  auto a = random_vec(37 * 71, rng), b = random_vec(71 * 53, rng);
  std::vector<float> c(37 * 53);
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (!kernels::isa_supported(isa)) continue;
    CHECK(gemm_with(isa, g, a, b, c) == gemm_with(isa, g, a, b, c));
  }
}

TEST_CASE("elementwise kernels agree across isas") {
  Rng rng(23);
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 1000u, 1003u}) {
    auto x = random_vec(n, rng), y0 = random_vec(n, rng), gy = random_vec(n, rng);
    std::vector<float> mask(n);
    for (auto& m : mask) m = rng.below(2) ? 2.0f : 0.0f;
    auto w0 = random_vec(n, rng), g0 = random_vec(n, rng), v0 = random_vec(n, rng);
    const kernels::SgdArgs sgd{0.01f, 0.9f, 0.002f};

    struct Out {
      std::vector<float> axpy, relu, relu_back, mul, w, v;
      double sum;
    };
    auto run = [&](Isa isa) {
      kernels::ScopedIsa scope(isa);
      Out o{y0, std::vector<float>(n), std::vector<float>(n), std::vector<float>(n), w0, v0, 0.0};
      kernels::axpy(n, 0.37f, x.data(), o.axpy.data());
      kernels::relu_forward(n, x.data(), o.relu.data());
      kernels::relu_backward(n, x.data(), gy.data(), o.relu_back.data());
      kernels::multiply(n, x.data(), mask.data(), o.mul.data());
      kernels::sgd_momentum(n, sgd, o.w.data(), g0.data(), o.v.data());
      o.sum = kernels::sum(n, x.data());
      return o;
    };
    const Out ref = run(Isa::scalar);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(ref.relu[i] == std::max(x[i], 0.0f));
      CHECK(ref.relu_back[i] == (x[i] > 0 ? gy[i] : 0.0f));
      CHECK(ref.mul[i] == x[i] * mask[i]);
    }
    for (Isa isa : vector_isas()) {
      const Out got = run(isa);
      CHECK(got.relu == ref.relu);
      CHECK(got.relu_back == ref.relu_back);
      CHECK(got.mul == ref.mul);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(got.axpy[i] == doctest::Approx(ref.axpy[i]).epsilon(1e-6));
        CHECK(got.w[i] == doctest::Approx(ref.w[i]).epsilon(1e-6));
        CHECK(got.v[i] == doctest::Approx(ref.v[i]).epsilon(1e-6));
      }
      CHECK(got.sum == doctest::Approx(ref.sum).epsilon(1e-9));
    }
  }
}

TEST_CASE("sgd kernel follows the update rule") {
  kernels::ScopedIsa scope(Isa::scalar);
  std::vector<float> w{1.0f}, g{0.1f}, v{0.0f};
  // g' = 0.1 + 2*0.5*1 = 1.1; v = -0.1 * 1.1; w = 1 - 0.11
  kernels::sgd_momentum(1, kernels::SgdArgs{0.1f, 0.9f, 1.0f}, w.data(), g.data(), v.data());
  CHECK(v[0] == doctest::Approx(-0.11f));
  CHECK(w[0] == doctest::Approx(0.89f));
}
