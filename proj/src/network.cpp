#include "prefnet/network.hpp"

#include <algorithm>
#include <cmath>

#include "prefnet/error.hpp"

namespace prefnet {
namespace {

struct LayerTrace {
  Tensor<float> input;
  Shape input_shape;
  std::vector<std::size_t> argmax;
  Tensor<float> mask;
};

struct GroupIndex {
  // Position in param_groups order of each layer's weight group; the bias
  // group follows it.
  std::vector<std::size_t> weight_group;
};

GroupIndex group_index(const ModelSpec& spec) {
  GroupIndex idx;
  idx.weight_group.assign(spec.layers.size(), 0);
  std::size_t g = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (has_params(spec.layers[i])) {
      idx.weight_group[i] = g;
      g += 2;
    }
  }
  return idx;
}

// One layer forward. Dropout runs in train mode only when `rng` is given.
Tensor<float> apply_layer(const LayerKind& layer, const LayerParams& p, Tensor<float> x, Rng* rng,
                          LayerTrace* trace) {
  if (const auto* conv = std::get_if<Conv3x3>(&layer)) {
    Tensor<float> y = conv3x3_forward(x, p.weights, p.bias, conv->bias);
    if (trace) trace->input = std::move(x);
    return y;
  }
  if (std::holds_alternative<MaxPool2x2>(layer)) {
    auto pooled = maxpool2x2_forward(x);
    if (trace) {
      trace->input_shape = x.shape();
      trace->argmax = std::move(pooled.argmax);
    }
    return std::move(pooled.output);
  }
  if (std::holds_alternative<ReLU>(layer)) {
    Tensor<float> y = relu_forward(x);
    if (trace) trace->input = std::move(x);
    return y;
  }
  if (std::holds_alternative<Flatten>(layer)) {
    if (trace) trace->input_shape = x.shape();
    return flatten_forward(std::move(x));
  }
  if (std::holds_alternative<FullyConnected>(layer)) {
    Tensor<float> y = fc_forward(x, p.weights, p.bias);
    if (trace) trace->input = std::move(x);
    return y;
  }
  if (const auto* drop = std::get_if<Dropout>(&layer)) {
    if (rng == nullptr) return x;
    auto result = dropout_forward(x, drop->p, Mode::train, *rng);
    if (trace) trace->mask = std::move(result.mask);
    return std::move(result.output);
  }
  return softmax(x);
}

}  // namespace

std::size_t first_trainable_layer(const ModelSpec& spec, const FreezeMask& mask) {
  const auto groups = param_groups(spec);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (i < mask.trainable.size() && mask.trainable[i]) return groups[i].layer;
  }
  return spec.layers.size();
}

Tensor<float> forward_range(const ModelSpec& spec, const ParamSet& params, Tensor<float> input,
                            std::size_t begin, std::size_t end) {
  end = std::min(end, spec.layers.size());
  for (std::size_t i = begin; i < end; ++i) {
    input = apply_layer(spec.layers[i], params[i], std::move(input), nullptr, nullptr);
  }
  return input;
}

Tensor<float> predict_probs(const Checkpoint& model, Tensor<float> batch) {
  return forward_range(model.spec, model.params, std::move(batch));
}

std::vector<int> argmax_rows(const Tensor<float>& probs) {
  const std::size_t k = probs.shape().sample_size();
  std::vector<int> out(probs.shape().n);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const float* row = probs.sample(n).data();
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[n] = static_cast<int>(best);
  }
  return out;
}

BatchGradients compute_gradients(const ModelSpec& spec, const ParamSet& params, const FreezeMask& mask,
                                 Tensor<float> input, std::span<const int> labels, bool dropout,
                                 Rng& rng, std::size_t begin) {
  const std::size_t count = spec.layers.size();
  if (count == 0 || !std::holds_alternative<SoftmaxNLL>(spec.layers.back())) {
    throw ConfigError("model must end in SoftmaxNLL to compute gradients");
  }
  const std::size_t first = std::max(begin, first_trainable_layer(spec, mask));
  const GroupIndex gidx = group_index(spec);
  const std::size_t last = count - 1;

  std::vector<LayerTrace> trace(count);
  Tensor<float> x = std::move(input);
  for (std::size_t i = begin; i < last; ++i) {
    x = apply_layer(spec.layers[i], params[i], std::move(x), dropout ? &rng : nullptr,
                    i >= first ? &trace[i] : nullptr);
  }

  const auto fwd = softmax_nll_forward(x, labels);
  BatchGradients out;
  out.loss = fwd.loss;
  const auto predicted = argmax_rows(fwd.probs);
  for (std::size_t n = 0; n < predicted.size(); ++n) {
    if (predicted[n] == labels[n]) ++out.correct;
  }
  out.grads.resize(count);

  Tensor<float> grad = softmax_nll_backward(fwd.probs, labels);
  for (std::size_t i = last; i-- > first;) {
    const LayerKind& layer = spec.layers[i];
    LayerTrace& t = trace[i];
    const bool want_input = i > first;
    if (const auto* conv = std::get_if<Conv3x3>(&layer)) {
      auto g = conv3x3_backward(t.input, params[i].weights, conv->bias, grad, want_input);
      if (mask.trainable[gidx.weight_group[i]]) out.grads[i].weights = std::move(g.weights);
      if (mask.trainable[gidx.weight_group[i] + 1]) out.grads[i].bias = std::move(g.bias);
      grad = std::move(g.input);
    } else if (std::holds_alternative<FullyConnected>(layer)) {
      auto g = fc_backward(t.input, params[i].weights, grad, want_input);
      if (mask.trainable[gidx.weight_group[i]]) out.grads[i].weights = std::move(g.weights);
      if (mask.trainable[gidx.weight_group[i] + 1]) out.grads[i].bias = std::move(g.bias);
      grad = std::move(g.input);
    } else if (std::holds_alternative<MaxPool2x2>(layer)) {
      if (want_input) grad = maxpool2x2_backward(t.input_shape, t.argmax, grad);
    } else if (std::holds_alternative<ReLU>(layer)) {
      if (want_input) grad = relu_backward(t.input, grad);
    } else if (std::holds_alternative<Flatten>(layer)) {
      if (want_input) grad = flatten_backward(std::move(grad), t.input_shape);
    } else if (std::holds_alternative<Dropout>(layer)) {
      if (want_input) grad = dropout_backward(grad, t.mask);
    }
    t = LayerTrace{};
  }
  return out;
}

}  // namespace prefnet
