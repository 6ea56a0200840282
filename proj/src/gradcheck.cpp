#include "prefnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "prefnet/layers.hpp"
#include "prefnet/rng.hpp"

namespace prefnet {
namespace {

using T64 = Tensor<double>;

T64 random_tensor(const Shape& s, Rng& rng, double scale) {
  T64 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

// Values whose pairwise gaps exceed any perturbation, so pooling argmax is
// stable under +-eps.
T64 distinct_tensor(const Shape& s, Rng& rng, double gap) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  T64 t(s);
  const double offset = -0.5 * gap * static_cast<double>(s.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = offset + gap * static_cast<double>(order[i]);
  return t;
}

// Magnitudes in [margin, 1] with random sign, away from the ReLU kink.
T64 kink_free_tensor(const Shape& s, Rng& rng, double margin) {
  T64 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double mag = rng.uniform(margin, 1.0);
    t[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

double objective(const T64& out, const T64& projection) {
  double j = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) j += out[i] * projection[i];
  return j;
}

double rel_error(double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); }

// Central differences of `loss` with respect to every element of `target`,
// compared against `analytic`.
GradCheckEntry compare(const std::string& name, T64& target, const T64& analytic, double eps,
                       const std::function<double()>& loss) {
  GradCheckEntry entry{name, target.size(), 0.0};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double saved = target[i];
    target[i] = saved + eps;
    const double up = loss();
    target[i] = saved - eps;
    const double down = loss();
    target[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    entry.max_rel_error = std::max(entry.max_rel_error, rel_error(analytic[i], numeric));
  }
  return entry;
}

}  // namespace

GradCheckReport gradient_check(const LayerKind& layer, const Shape& input_shape, double eps,
                               double tolerance, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "gradcheck");
  GradCheckReport report;
  report.layer = describe(layer);
  report.tolerance = tolerance;

  if (const auto* conv = std::get_if<Conv3x3>(&layer)) {
    T64 x = random_tensor(input_shape, rng, 1.0);
    T64 w = random_tensor(conv3x3_weight_shape(input_shape.c, conv->out_maps), rng, 0.5);
    const Shape os = conv3x3_output_shape(input_shape, conv->out_maps);
    T64 b = random_tensor(conv3x3_bias_shape(os, conv->bias), rng, 0.5);
    const T64 r = random_tensor(os, rng, 1.0);
    const auto grads = conv3x3_backward(x, w, conv->bias, r);
    auto loss = [&] { return objective(conv3x3_forward(x, w, b, conv->bias), r); };
    report.entries.push_back(compare("input", x, grads.input, eps, loss));
    report.entries.push_back(compare("weights", w, grads.weights, eps, loss));
    report.entries.push_back(compare("bias", b, grads.bias, eps, loss));
  } else if (std::holds_alternative<MaxPool2x2>(layer)) {
    T64 x = distinct_tensor(input_shape, rng, 10.0 * eps);
    const auto pooled = maxpool2x2_forward(x);
    const T64 r = random_tensor(pooled.output.shape(), rng, 1.0);
    const T64 gx = maxpool2x2_backward(input_shape, pooled.argmax, r);
    auto loss = [&] { return objective(maxpool2x2_forward(x).output, r); };
    report.entries.push_back(compare("input", x, gx, eps, loss));
  } else if (std::holds_alternative<ReLU>(layer)) {
    T64 x = kink_free_tensor(input_shape, rng, std::max(0.1, 10.0 * eps));
    const T64 r = random_tensor(input_shape, rng, 1.0);
    const T64 gx = relu_backward(x, r);
    auto loss = [&] { return objective(relu_forward(x), r); };
    report.entries.push_back(compare("input", x, gx, eps, loss));
  } else if (std::holds_alternative<Flatten>(layer)) {
    T64 x = random_tensor(input_shape, rng, 1.0);
    const Shape flat{input_shape.n, input_shape.sample_size(), 1, 1};
    T64 r = random_tensor(flat, rng, 1.0);
    const T64 gx = flatten_backward(r, input_shape);
    auto loss = [&] { return objective(flatten_forward(x), r); };
    report.entries.push_back(compare("input", x, gx, eps, loss));
  } else if (const auto* fc = std::get_if<FullyConnected>(&layer)) {
    T64 x = random_tensor(input_shape, rng, 1.0);
    T64 w = random_tensor(fc_weight_shape(input_shape.sample_size(), fc->out_units), rng, 0.5);
    T64 b = random_tensor(fc_bias_shape(fc->out_units), rng, 0.5);
    const T64 r = random_tensor(Shape{input_shape.n, fc->out_units, 1, 1}, rng, 1.0);
    const auto grads = fc_backward(x, w, r);
    auto loss = [&] { return objective(fc_forward(x, w, b), r); };
    report.entries.push_back(compare("input", x, grads.input, eps, loss));
    report.entries.push_back(compare("weights", w, grads.weights, eps, loss));
    report.entries.push_back(compare("bias", b, grads.bias, eps, loss));
  } else if (const auto* drop = std::get_if<Dropout>(&layer)) {
    T64 x = random_tensor(input_shape, rng, 1.0);
    Rng mask_rng = Rng::stream(seed, "gradcheck-dropout");
    const T64 mask = dropout_forward(x, drop->p, Mode::train, mask_rng).mask;
    const T64 r = random_tensor(input_shape, rng, 1.0);
    const T64 gx = dropout_backward(r, mask);
    // The mask is held fixed; the layer is then linear in its input.
    auto loss = [&] {
      T64 out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
      return objective(out, r);
    };
    report.entries.push_back(compare("input", x, gx, eps, loss));
  } else {
    T64 x = random_tensor(input_shape, rng, 2.0);
    const std::size_t classes = input_shape.sample_size();
    std::vector<int> labels(input_shape.n);
    for (auto& l : labels) l = static_cast<int>(rng.below(classes));
    const auto fwd = softmax_nll_forward(x, labels);
    const T64 gx = softmax_nll_backward(fwd.probs, labels);
    auto loss = [&] { return softmax_nll_forward(x, labels).loss; };
    report.entries.push_back(compare("input", x, gx, eps, loss));
  }

  for (const auto& e : report.entries) report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace prefnet
