#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "prefnet/checkpoint.hpp"
#include "prefnet/dataset.hpp"
#include "prefnet/features.hpp"
#include "prefnet/optimizer.hpp"

namespace prefnet {

/// lr 0.001, momentum 0.9, l2 0.0001, 50 epochs, batch 16, no dropout.
TrainConfig fine_tune_defaults();
/// lr 1e-4, momentum 0.9, l2 0.8, no dropout.
TrainConfig logreg_defaults();

/// Retrains the final k (1..3) fully connected layers of a pretrained two-class
/// network. Those layers are re-drawn from cfg.seed, everything before them is
/// frozen, and dropout is forced off.
/// Throws ConfigError for a bad k, ShapeError if the network is not two-class
/// or the data do not fit its input.
TrainResult fine_tune(const Checkpoint& pretrained, std::size_t last_k, const ExampleSource& train_set,
                      const ExampleSource& val_set, TrainConfig cfg = fine_tune_defaults(),
                      const EpochCallback& on_epoch = {});

/// Inference up to and including the named layer; one flattened row per
/// example in source order. Throws ConfigError listing the valid names.
FeatureMatrix extract_features(const Checkpoint& model, std::string_view layer_name, const ExampleSource& source,
                               std::size_t batch_size = 64);

/// Fits logreg_head(d) on the training rows, initialized from cfg.seed.
/// Throws ShapeError when the two matrices disagree on d.
TrainResult train_logreg(const FeatureMatrix& train_fm, const FeatureMatrix& val_fm,
                         TrainConfig cfg = logreg_defaults(), const EpochCallback& on_epoch = {});

/// min(1, 2e/n): a relabeling disagreement is read as a coin flip on an
/// ambiguous example, so each one stands for two noisy labels.
/// Throws ArgumentError unless 0 <= e <= n and n > 0.
double estimate_label_noise(long long n_relabeled, long long n_disagreements);

}  // namespace prefnet
