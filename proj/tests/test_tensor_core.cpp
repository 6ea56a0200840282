#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "prefnet/error.hpp"
#include "prefnet/gradcheck.hpp"
#include "prefnet/kernels.hpp"
#include "prefnet/layers.hpp"

using namespace prefnet;

namespace {

template <typename T>
Tensor<T> conv_bias(const Shape& in, std::size_t maps, BiasMode mode, Rng& rng) {
  const Shape out = conv3x3_output_shape(in, maps);
  return oracle::random_tensor<T>(conv3x3_bias_shape(out, mode), rng);
}

}  // namespace

TEST_CASE("conv output extents") {
  const Shape in{1, 3, 250, 250};
  CHECK(conv3x3_output_shape(in, 8) == Shape{1, 8, 248, 248});
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const Shape s{1 + rng.below(2), 1 + rng.below(3), 3 + rng.below(6), 3 + rng.below(6)};
    const Shape o = conv3x3_output_shape(s, 2);
    CHECK(o.h == s.h - 2);
    CHECK(o.w == s.w - 2);
  }
  CHECK_THROWS_AS(conv3x3_output_shape(Shape{1, 1, 2, 5}, 1), ShapeError);
}

TEST_CASE("conv of zeros with zero bias is zero") {
  Rng rng(2);
  const Shape in{1, 2, 6, 7};
  Tensor<float> x(in);
  auto w = oracle::random_tensor<float>(conv3x3_weight_shape(2, 4), rng);
  Tensor<float> b(conv3x3_bias_shape(conv3x3_output_shape(in, 4), BiasMode::untied));
  auto y = conv3x3_forward(x, w, b, BiasMode::untied);
  for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("conv matches the direct loop oracle") {
  Rng rng(3);
  for (int t = 0; t < 60; ++t) {
    const Shape in{1 + rng.below(2), 1 + rng.below(4), 3 + rng.below(6), 3 + rng.below(6)};
    const std::size_t maps = 1 + rng.below(5);
    const BiasMode mode = rng.below(2) ? BiasMode::untied : BiasMode::tied;
    auto x = oracle::random_tensor<float>(in, rng);
    auto w = oracle::random_tensor<float>(conv3x3_weight_shape(in.c, maps), rng);
    auto b = conv_bias<float>(in, maps, mode, rng);
    auto got = conv3x3_forward(x, w, b, mode);
    auto want = oracle::conv3x3(x, w, b, mode == BiasMode::untied);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-6 * (1 + std::abs(want[i])));
  }
}

TEST_CASE("conv rejects a channel mismatch") {
  Rng rng(4);
  auto x = oracle::random_tensor<float>(Shape{1, 3, 5, 5}, rng);
  auto w = oracle::random_tensor<float>(conv3x3_weight_shape(2, 4), rng);
  Tensor<float> b(Shape{1, 4, 1, 1});
  try {
    conv3x3_forward(x, w, b, BiasMode::tied);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(1,3,5,5)") != std::string::npos);
    CHECK(msg.find("(4,2,3,3)") != std::string::npos);
  }
}

TEST_CASE("conv backward with zero upstream gradient") {
  Rng rng(5);
  const Shape in{2, 2, 6, 6};
  auto x = oracle::random_tensor<double>(in, rng);
  auto w = oracle::random_tensor<double>(conv3x3_weight_shape(2, 3), rng);
  Tensor<double> g(conv3x3_output_shape(in, 3));
  auto grads = conv3x3_backward(x, w, BiasMode::untied, g);
  for (double v : grads.input.data()) CHECK(v == 0.0);
  for (double v : grads.weights.data()) CHECK(v == 0.0);
  for (double v : grads.bias.data()) CHECK(v == 0.0);
}

TEST_CASE("untied bias gradient of sum(output) is all ones") {
  Rng rng(6);
  const Shape in{1, 2, 7, 6};
  auto x = oracle::random_tensor<double>(in, rng);
  auto w = oracle::random_tensor<double>(conv3x3_weight_shape(2, 3), rng);
  Tensor<double> g(conv3x3_output_shape(in, 3), 1.0);
  auto grads = conv3x3_backward(x, w, BiasMode::untied, g);
  CHECK(grads.bias.shape() == Shape{1, 3, 5, 4});
  for (double v : grads.bias.data()) CHECK(v == 1.0);
}

TEST_CASE("conv backward rejects a mismatched upstream gradient") {
  Rng rng(7);
  auto x = oracle::random_tensor<double>(Shape{1, 2, 6, 6}, rng);
  auto w = oracle::random_tensor<double>(conv3x3_weight_shape(2, 3), rng);
  Tensor<double> g(Shape{1, 3, 5, 4});
  CHECK_THROWS_AS(conv3x3_backward(x, w, BiasMode::tied, g), ShapeError);
}

TEST_CASE("pool extents are ceil mode") {
  CHECK(maxpool2x2_output_shape(Shape{1, 16, 59, 59}) == Shape{1, 16, 30, 30});
  CHECK(maxpool2x2_output_shape(Shape{1, 1, 1, 1}) == Shape{1, 1, 1, 1});
  for (std::size_t h = 1; h < 40; ++h) CHECK(maxpool2x2_output_shape(Shape{1, 1, h, 3}).h == (h + 1) / 2);
}

TEST_CASE("pool on a 2x2 block") {
  Tensor<float> x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto r = maxpool2x2_forward(x);
  REQUIRE(r.output.size() == 1);
  CHECK(r.output[0] == 4.0f);
  CHECK(r.argmax[0] == 3);
}

TEST_CASE("pool ties go to the smallest index") {
  Tensor<float> x(Shape{1, 1, 3, 3}, 5.0f);
  auto r = maxpool2x2_forward(x);
  CHECK(r.argmax == std::vector<std::size_t>{0, 2, 6, 8});
  Tensor<double> g(r.output.shape(), 1.0);
  auto gx = maxpool2x2_backward(x.shape(), r.argmax, g);
  CHECK(gx.storage() == std::vector<double>{1, 0, 1, 0, 0, 0, 1, 0, 1});
}

TEST_CASE("pool matches the brute-force oracle") {
  Rng rng(8);
  {
    auto x = oracle::random_tensor<float>(Shape{1, 3, 7, 7}, rng);
    auto r = maxpool2x2_forward(x);
    CHECK(r.output.shape() == Shape{1, 3, 4, 4});
  }
  for (int t = 0; t < 100; ++t) {
    const Shape in{1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(8), 1 + rng.below(8)};
    auto x = oracle::random_tensor<float>(in, rng);
    // Quantize to force ties.
    if (t % 2) for (auto& v : x.storage()) v = std::round(v * 2.0f);
    auto r = maxpool2x2_forward(x);
    auto o = oracle::maxpool2x2(x);
    REQUIRE(r.output.shape() == o.out.shape());
    CHECK(r.argmax == o.argmax);
    for (std::size_t i = 0; i < o.out.size(); ++i) CHECK(r.output[i] == o.out[i]);
  }
}

TEST_CASE("pool rejects an empty tensor") {
  Tensor<float> x(Shape{1, 1, 0, 4});
  CHECK_THROWS_AS(maxpool2x2_forward(x), ShapeError);
}

TEST_CASE("fc with identity weights is the identity") {
  Rng rng(9);
  auto x = oracle::random_tensor<float>(Shape{3, 5, 1, 1}, rng);
  Tensor<float> w(fc_weight_shape(5, 5));
  for (std::size_t i = 0; i < 5; ++i) w[i * 5 + i] = 1.0f;
  Tensor<float> b(fc_bias_shape(5));
  auto y = fc_forward(x, w, b);
  CHECK(y.storage() == x.storage());
}

TEST_CASE("fc reads its input flattened") {
  Rng rng(10);
  auto x = oracle::random_tensor<double>(Shape{2, 2, 2, 3}, rng);
  auto w = oracle::random_tensor<double>(fc_weight_shape(12, 4), rng);
  auto b = oracle::random_tensor<double>(fc_bias_shape(4), rng);
  auto y = fc_forward(x, w, b);
  REQUIRE(y.shape() == Shape{2, 4, 1, 1});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < 12; ++i) acc += x[n * 12 + i] * w[i * 4 + o];
      CHECK(y[n * 4 + o] == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS_AS(fc_forward(x, oracle::random_tensor<double>(fc_weight_shape(11, 4), rng), b), ShapeError);
}

TEST_CASE("flatten round trip") {
  Rng rng(11);
  auto x = oracle::random_tensor<float>(Shape{2, 3, 4, 5}, rng);
  auto y = flatten_forward(x);
  CHECK(y.shape() == Shape{2, 60, 1, 1});
  CHECK(y.storage() == x.storage());
  auto back = flatten_backward(y, x.shape());
  CHECK(back.shape() == x.shape());
}

TEST_CASE("relu") {
  Tensor<float> x(Shape{1, 1, 1, 4}, std::vector<float>{-1, 0, 2, -0.5f});
  CHECK(relu_forward(x).storage() == std::vector<float>{0, 0, 2, 0});
  Tensor<float> g(x.shape(), 3.0f);
  CHECK(relu_backward(x, g).storage() == std::vector<float>{0, 0, 3, 0});
}

TEST_CASE("softmax rows sum to one and nll is non-negative") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 1 + rng.below(6), k = 2 + rng.below(4);
    auto logits = oracle::random_tensor<float>(Shape{n, k, 1, 1}, rng, -20, 20);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(k));
    auto r = softmax_nll_forward(logits, labels);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < k; ++j) s += r.probs[i * k + j];
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
    CHECK(r.loss >= 0.0);
  }
}

TEST_CASE("uniform logits give ln 2") {
  Tensor<double> logits(Shape{3, 2, 1, 1}, 0.7);
  std::vector<int> labels{0, 1, 1};
  auto r = softmax_nll_forward(logits, labels);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("nll rejects labels out of range") {
  Tensor<float> logits(Shape{2, 2, 1, 1});
  std::vector<int> bad{0, 2};
  CHECK_THROWS_AS(softmax_nll_forward(logits, bad), LabelError);
  std::vector<int> neg{-1, 0};
  CHECK_THROWS_AS(softmax_nll_forward(logits, neg), LabelError);
  std::vector<int> short_labels{0};
  CHECK_THROWS_AS(softmax_nll_forward(logits, short_labels), ShapeError);
}

TEST_CASE("dropout identities") {
  Rng data(13);
  auto x = oracle::random_tensor<float>(Shape{4, 9, 1, 1}, data);
  Rng rng(14);
  CHECK(dropout_forward(x, 0.0, Mode::train, rng).output.storage() == x.storage());
  for (double p : {0.0, 0.3, 0.5, 0.9}) {
    auto r = dropout_forward(x, p, Mode::test, rng);
    CHECK(r.output.storage() == x.storage());
    CHECK(r.mask.empty());
  }
  CHECK_THROWS_AS(dropout_forward(x, 1.0, Mode::train, rng), ConfigError);
  CHECK_THROWS_AS(dropout_forward(x, -0.1, Mode::train, rng), ConfigError);
}

TEST_CASE("dropout mean over a million ones") {
  Tensor<float> x(Shape{1, 1000000, 1, 1}, 1.0f);
  Rng rng = Rng::stream(15, "dropout");
  auto r = dropout_forward(x, 0.5, Mode::train, rng);
  double s = 0;
  std::size_t zeros = 0;
  for (float v : r.output.data()) {
    s += v;
    zeros += v == 0.0f;
    CHECK((v == 0.0f || v == 2.0f));
  }
  const double mean = s / 1e6;
  CHECK(mean >= 0.99);
  CHECK(mean <= 1.01);
  // 3 sigma on the mean of a {0, 2} variable: sd = 1 / sqrt(n).
  CHECK(std::abs(mean - 1.0) <= 3.0 / 1000.0);
  auto g = dropout_backward(Tensor<float>(x.shape(), 1.0f), r.mask);
  CHECK(g.storage() == r.output.storage());
}

TEST_CASE("dropout is reproducible from its stream") {
  Tensor<float> x(Shape{2, 50, 1, 1}, 1.0f);
  Rng a = Rng::stream(16, "dropout"), b = Rng::stream(16, "dropout");
  CHECK(dropout_forward(x, 0.5, Mode::train, a).mask.storage() ==
        dropout_forward(x, 0.5, Mode::train, b).mask.storage());
}

TEST_CASE("gradient check examples") {
  auto conv = gradient_check(Conv3x3{3, BiasMode::untied}, Shape{1, 2, 6, 6}, 1e-3, 1e-4, 1);
  CHECK(conv.passed);
  CHECK(conv.max_rel_error <= 1e-4);
  auto fc = gradient_check(FullyConnected{5}, Shape{3, 10, 1, 1}, 1e-3, 1e-4, 2);
  CHECK(fc.passed);
  auto relu = gradient_check(ReLU{}, Shape{2, 3, 4, 4}, 1e-3, 1e-4, 3);
  CHECK(relu.passed);
  auto nll = gradient_check(SoftmaxNLL{}, Shape{4, 2, 1, 1}, 1e-3, 1e-4, 4);
  CHECK(nll.passed);
  CHECK(nll.max_rel_error <= 1e-4);
}

TEST_CASE("gradient check property over random small shapes") {
  Rng rng(17);
  const std::vector<LayerKind> kinds{Conv3x3{2, BiasMode::untied}, Conv3x3{3, BiasMode::tied}, MaxPool2x2{},
                                     ReLU{},  Flatten{},  FullyConnected{4},  Dropout{0.5},  SoftmaxNLL{}};
  for (const auto& kind : kinds) {
    for (int t = 0; t < 20; ++t) {
      Shape s{1 + rng.below(2), 1 + rng.below(3), 3 + rng.below(6), 3 + rng.below(6)};
      if (std::holds_alternative<SoftmaxNLL>(kind)) s = Shape{1 + rng.below(5), 2 + rng.below(3), 1, 1};
      auto rep = gradient_check(kind, s, 1e-3, 1e-4, rng.next_u64());
      INFO(describe(kind) << " on " << s.str() << " err " << rep.max_rel_error);
      CHECK(rep.passed);
      CHECK(rep.max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("gradient check catches a bad tolerance") {
  auto rep = gradient_check(Conv3x3{2, BiasMode::tied}, Shape{1, 1, 5, 5}, 1e-3, 0.0, 5);
  CHECK(rep.max_rel_error > 0.0);
  CHECK_FALSE(rep.passed);
}

TEST_CASE("rng streams") {
  Rng a = Rng::stream(1, "init"), b = Rng::stream(1, "init"), c = Rng::stream(1, "shuffle");
  const auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  Rng r(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = r.uniform_open();
    CHECK((u > 0.0 && u < 1.0));
    ++counts[r.below(7)];
  }
  for (int k : counts) CHECK(std::abs(k - 10000) < 400);
  std::vector<int> items(50);
  std::iota(items.begin(), items.end(), 0);
  r.shuffle(std::span<int>(items));
  auto sorted = items;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(50);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
  CHECK(items != expect);
}
