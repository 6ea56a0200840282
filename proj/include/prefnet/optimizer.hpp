#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "prefnet/checkpoint.hpp"
#include "prefnet/dataset.hpp"

namespace prefnet {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double l2 = 0.001;
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  bool dropout_enabled = true;
  std::uint64_t seed = 0;
  bool shuffle = true;

  /// Throws ConfigError on lr <= 0, momentum outside [0,1), l2 < 0 or batch_size 0.
  void validate() const;
};

/// Recipe defaults for the attractiveness network.
TrainConfig attractiveness_defaults();
/// Recipe defaults for the gender network.
TrainConfig gender_defaults();

struct CurveRecord {
  std::size_t epoch = 0;
  double train_err = 0.0;  // running mini-batch misclassification over the epoch
  double val_err = 0.0;

  bool operator==(const CurveRecord&) const = default;
};

struct CurveLog {
  std::vector<CurveRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  bool operator==(const CurveLog&) const = default;
};

/// `epoch,train_err,val_err` with 6 decimals per rate.
std::string curves_to_csv(const CurveLog& log);
CurveLog curves_from_csv(const std::string& text);
void write_curves(const CurveLog& log, const std::filesystem::path& path);
CurveLog read_curves(const std::filesystem::path& path);

/// One momentum-SGD update over every trainable group. Weight groups get the
/// L2 term 2*l2*w; bias groups are never decayed. Frozen groups are untouched.
void sgd_step(const ModelSpec& spec, ParamSet& params, const ParamSet& grads, ParamSet& velocity,
              const FreezeMask& mask, const TrainConfig& cfg);

/// Zero velocity shaped like the trainable groups.
ParamSet zero_velocity(const ModelSpec& spec, const ParamSet& params);

struct TrainResult {
  CurveLog curves;
  Checkpoint best;   // early-stopped model (earliest minimum validation error)
  Checkpoint final_model;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  /// Mean NLL of every mini-batch in order.
  std::vector<double> step_losses;
};

using EpochCallback = std::function<void(const CurveRecord&, const Checkpoint&)>;

/// Mini-batch SGD. Each epoch draws a permutation from the run seed (when
/// shuffle is on), processes every batch including a final partial one, and
/// records the running training error plus a full validation pass.
TrainResult train(const Checkpoint& model, const FreezeMask& mask, const ExampleSource& train_set,
                  const ExampleSource& val_set, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Epoch index (1-based) with the lowest validation error; earliest on ties.
std::size_t select_early_stop(const CurveLog& curves);
/// Picks checkpoints[select_early_stop(curves) - 1].
const Checkpoint& select_early_stop(const CurveLog& curves, const std::vector<Checkpoint>& checkpoints);

struct EvalResult {
  double misclassification = 0.0;
  double accuracy = 0.0;
  double mean_nll = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t count = 0;
};

/// Inference-mode evaluation; predictions are the argmax of the softmax.
EvalResult evaluate(const Checkpoint& model, const ExampleSource& data, std::size_t batch_size = 64);

}  // namespace prefnet
