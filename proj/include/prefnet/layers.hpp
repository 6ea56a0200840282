#pragma once

// Forward/backward primitives for the layer kinds in layer_kind.hpp. All are
// pure functions of their arguments (dropout additionally consumes an explicit
// random stream), instantiated for float and double.
//
// Parameter layouts:
//   conv weights  (out_maps, in_maps, 3, 3)
//   conv bias     (1, out_maps, 1, 1) tied, (1, out_maps, H-2, W-2) untied
//   fc weights    (in_units, out_units, 1, 1), row-major [in][out]
//   fc bias       (1, out_units, 1, 1)

#include <cstddef>
#include <span>
#include <vector>

#include "prefnet/layer_kind.hpp"
#include "prefnet/rng.hpp"
#include "prefnet/tensor.hpp"

namespace prefnet {

enum class Mode { train, test };

Shape conv3x3_output_shape(const Shape& input, std::size_t out_maps);
Shape conv3x3_weight_shape(std::size_t in_maps, std::size_t out_maps);
Shape conv3x3_bias_shape(const Shape& output, BiasMode mode);
Shape maxpool2x2_output_shape(const Shape& input);
Shape fc_weight_shape(std::size_t in_units, std::size_t out_units);
Shape fc_bias_shape(std::size_t out_units);

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                          BiasMode mode);

template <typename T>
struct ConvGradients {
  Tensor<T> input;  // empty when not requested
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
ConvGradients<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights, BiasMode mode,
                                  const Tensor<T>& grad_out, bool want_input_grad = true);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  /// Linear index into the input of each output's maximum.
  std::vector<std::size_t> argmax;
};

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> maxpool2x2_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                              const Tensor<T>& grad_out);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

/// (N, C, H, W) -> (N, C*H*W, 1, 1); no data movement.
template <typename T>
Tensor<T> flatten_forward(Tensor<T> input);
template <typename T>
Tensor<T> flatten_backward(Tensor<T> grad_out, const Shape& input_shape);

/// Input is read as (N, C*H*W); output is (N, out_units, 1, 1).
template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias);

template <typename T>
struct FcGradients {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
FcGradients<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weights,
                           const Tensor<T>& grad_out, bool want_input_grad = true);

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  /// 0 or 1/(1-p) per element; empty in test mode.
  Tensor<T> mask;
};

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& input, double p, Mode mode, Rng& rng);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const Tensor<T>& mask);

/// Row-wise softmax of (N, K, 1, 1) logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
struct SoftmaxNllResult {
  Tensor<T> probs;
  /// Mean over the batch of -log p(label).
  double loss = 0.0;
};

template <typename T>
SoftmaxNllResult<T> softmax_nll_forward(const Tensor<T>& logits, std::span<const int> labels);
/// Gradient of the mean NLL with respect to the logits: (p - onehot) / N.
template <typename T>
Tensor<T> softmax_nll_backward(const Tensor<T>& probs, std::span<const int> labels);

}  // namespace prefnet
