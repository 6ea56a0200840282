#include "prefnet/transfer.hpp"

#include <algorithm>
#include <numeric>

#include "prefnet/error.hpp"
#include "prefnet/network.hpp"

namespace prefnet {

TrainConfig fine_tune_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 0.001;
  cfg.momentum = 0.9;
  cfg.l2 = 0.0001;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.dropout_enabled = false;
  return cfg;
}

TrainConfig logreg_defaults() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-4;
  cfg.momentum = 0.9;
  cfg.l2 = 0.8;
  cfg.dropout_enabled = false;
  return cfg;
}

TrainResult fine_tune(const Checkpoint& pretrained, std::size_t last_k, const ExampleSource& train_set,
                      const ExampleSource& val_set, TrainConfig cfg, const EpochCallback& on_epoch) {
  if (last_k < 1 || last_k > 3) throw ConfigError("last_k must be 1, 2 or 3, got " + std::to_string(last_k));
  const auto params = parameterized_layers(pretrained.spec);
  if (last_k > params.size()) {
    throw ConfigError("network has only " + std::to_string(params.size()) + " parameterized layers");
  }
  for (std::size_t j = params.size() - last_k; j < params.size(); ++j) {
    if (!std::holds_alternative<FullyConnected>(pretrained.spec.layers[params[j]])) {
      throw ConfigError("fine-tuning covers fully connected layers only; layer " + std::to_string(params[j]) +
                        " is " + describe(pretrained.spec.layers[params[j]]));
    }
  }
  const auto& head = std::get<FullyConnected>(pretrained.spec.layers[params.back()]);
  if (head.out_units != 2) {
    throw ShapeError("transfer target has 2 classes but the network outputs " + std::to_string(head.out_units));
  }

  Checkpoint start = pretrained;
  reinit_last_k(start, last_k, cfg.seed);
  start.meta = CheckpointMeta{};
  start.meta.seed = cfg.seed;
  cfg.dropout_enabled = false;
  return train(start, FreezeMask::last_k(start.spec, last_k), train_set, val_set, cfg, on_epoch);
}

FeatureMatrix extract_features(const Checkpoint& model, std::string_view layer_name, const ExampleSource& source,
                               std::size_t batch_size) {
  const auto idx = find_layer(model.spec, layer_name);
  if (!idx) {
    std::string names;
    for (const auto& n : layer_names(model.spec)) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown layer '" + std::string(layer_name) + "'; valid names: " + names);
  }
  if (source.example_shape() != model.spec.input) {
    throw ShapeError("examples of shape " + source.example_shape().str() + " do not fit model input " +
                     model.spec.input.str());
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");

  FeatureMatrix fm;
  fm.rows = source.size();
  for (std::size_t start = 0; start < source.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, source.size() - start);
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor<float> out = forward_range(model.spec, model.params, gather_batch(source, rows), 0, *idx + 1);
    fm.dim = out.shape().sample_size();
    fm.values.insert(fm.values.end(), out.data().begin(), out.data().end());
    for (auto r : rows) {
      fm.ids.push_back(source.id(r));
      fm.labels.push_back(source.label(r));
    }
  }
  if (fm.rows == 0) fm.dim = infer_shapes(model.spec)[*idx].out.sample_size();
  return fm;
}

TrainResult train_logreg(const FeatureMatrix& train_fm, const FeatureMatrix& val_fm, TrainConfig cfg,
                         const EpochCallback& on_epoch) {
  if (train_fm.dim != val_fm.dim) {
    throw ShapeError("training features have d=" + std::to_string(train_fm.dim) + " but validation features d=" +
                     std::to_string(val_fm.dim));
  }
  const InMemoryDataset train_set = to_dataset(train_fm);
  const InMemoryDataset val_set = to_dataset(val_fm);
  const Checkpoint start = init_params(logreg_head(train_fm.dim), cfg.seed);
  return train(start, FreezeMask::all_trainable(start.spec), train_set, val_set, cfg, on_epoch);
}

double estimate_label_noise(long long n_relabeled, long long n_disagreements) {
  if (n_relabeled <= 0) throw ArgumentError("relabeled count must be positive");
  if (n_disagreements < 0 || n_disagreements > n_relabeled) {
    throw ArgumentError("disagreements must lie in [0, " + std::to_string(n_relabeled) + "]");
  }
  return std::min(1.0, 2.0 * static_cast<double>(n_disagreements) / static_cast<double>(n_relabeled));
}

}  // namespace prefnet
