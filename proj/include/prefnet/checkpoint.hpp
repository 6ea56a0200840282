#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prefnet/model_spec.hpp"
#include "prefnet/tensor.hpp"

namespace prefnet {

/// Parameters of one layer; both tensors are empty for layers without any.
struct LayerParams {
  Tensor<float> weights;
  Tensor<float> bias;
};

using ParamSet = std::vector<LayerParams>;

struct CheckpointMeta {
  std::size_t epoch = 0;
  double train_err = 0.0;
  double val_err = 0.0;
  std::uint64_t seed = 0;
  /// Left empty by default so repeated runs produce identical files; the CLI
  /// fills it from SOURCE_DATE_EPOCH when that is set.
  std::string created_at;

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  ModelSpec spec;
  ParamSet params;  // one entry per layer of spec
  CheckpointMeta meta;
};

/// Per parameter group (see param_groups) trainable flag.
struct FreezeMask {
  std::vector<bool> trainable;

  static FreezeMask all_trainable(const ModelSpec& spec);
  /// Only the final k parameterized layers are trainable.
  static FreezeMask last_k(const ModelSpec& spec, std::size_t k);

  bool any() const;
  std::size_t trainable_params(const ModelSpec& spec) const;
};

/// Weights i.i.d. U(-0.06, 0.06) from the seeded stream, biases zero.
Checkpoint init_params(const ModelSpec& spec, std::uint64_t seed);

/// Re-draws the last k parameterized layers with the same scheme and stream
/// as init_params, in layer order.
void reinit_last_k(Checkpoint& ckpt, std::size_t k, std::uint64_t seed);

/// Throws CorruptionError when any parameter array disagrees with the model spec.
void validate_params(const ModelSpec& spec, const ParamSet& params);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian): "PNCK", u32 version, u64 length + spec text,
/// u64 length + meta text, u32 array count, then per array u64 element count
/// followed by float32 values. Arrays follow param_groups order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Bitwise equality of every parameter array.
bool params_bitwise_equal(const ParamSet& a, const ParamSet& b);

}  // namespace prefnet
