#pragma once

// Sequential execution of a ModelSpec over a parameter set: inference,
// prefix evaluation for feature extraction, and loss gradients for training.

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "prefnet/checkpoint.hpp"
#include "prefnet/layers.hpp"

namespace prefnet {

/// Runs layers [begin, end) on `input` in inference mode (dropout off). The
/// final SoftmaxNLL, when included, returns class probabilities.
Tensor<float> forward_range(const ModelSpec& spec, const ParamSet& params, Tensor<float> input,
                            std::size_t begin = 0,
                            std::size_t end = std::numeric_limits<std::size_t>::max());

/// Class probabilities (N, K, 1, 1) for a batch.
Tensor<float> predict_probs(const Checkpoint& model, Tensor<float> batch);

/// argmax per row; ties go to the lower class index.
std::vector<int> argmax_rows(const Tensor<float>& probs);

struct BatchGradients {
  double loss = 0.0;        // mean NLL over the batch
  std::size_t correct = 0;  // argmax hits in this (training-mode) forward
  ParamSet grads;           // empty tensors for frozen groups and parameter-free layers
};

/// Training-mode forward and backward through layers [begin, end of spec).
/// `input` must be the output of layer begin-1. Backward stops at the first
/// trainable layer at or after `begin`; frozen groups get no gradient.
BatchGradients compute_gradients(const ModelSpec& spec, const ParamSet& params, const FreezeMask& mask,
                                 Tensor<float> input, std::span<const int> labels, bool dropout,
                                 Rng& rng, std::size_t begin = 0);

/// Index of the first layer owning a trainable group, or layers.size().
std::size_t first_trainable_layer(const ModelSpec& spec, const FreezeMask& mask);

}  // namespace prefnet
