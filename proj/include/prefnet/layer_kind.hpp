#pragma once

#include <cstddef>
#include <string>
#include <variant>

namespace prefnet {

enum class BiasMode { tied, untied };

/// 3x3 filters, stride 1, no padding.
struct Conv3x3 {
  std::size_t out_maps = 0;
  BiasMode bias = BiasMode::untied;
  bool operator==(const Conv3x3&) const = default;
};
/// Non-overlapping 2x2 window, stride 2, ceil mode.
struct MaxPool2x2 {
  bool operator==(const MaxPool2x2&) const = default;
};
struct ReLU {
  bool operator==(const ReLU&) const = default;
};
struct Flatten {
  bool operator==(const Flatten&) const = default;
};
struct FullyConnected {
  std::size_t out_units = 0;
  bool operator==(const FullyConnected&) const = default;
};
/// Inverted dropout; `p` is the drop probability.
struct Dropout {
  double p = 0.5;
  bool operator==(const Dropout&) const = default;
};
struct SoftmaxNLL {
  bool operator==(const SoftmaxNLL&) const = default;
};

using LayerKind =
    std::variant<Conv3x3, MaxPool2x2, ReLU, Flatten, FullyConnected, Dropout, SoftmaxNLL>;

inline bool has_params(const LayerKind& layer) {
  return std::holds_alternative<Conv3x3>(layer) || std::holds_alternative<FullyConnected>(layer);
}

/// Human-readable form, e.g. "Conv3x3-8 (untied)" or "FC-32".
std::string describe(const LayerKind& layer);

}  // namespace prefnet
