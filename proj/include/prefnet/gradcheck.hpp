#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefnet/layer_kind.hpp"
#include "prefnet/tensor.hpp"

namespace prefnet {

struct GradCheckEntry {
  std::string tensor;  // "input", "weights", "bias"
  std::size_t elements = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::string layer;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::vector<GradCheckEntry> entries;
};

/// Compares analytic gradients of one layer against central differences in
/// 64-bit arithmetic. The scalar objective is sum(output * R) for a fixed
/// random R (the layer's own loss for SoftmaxNLL). Inputs are drawn so that
/// no perturbation of size `eps` crosses a ReLU kink or a pooling tie.
/// Relative error per element is |a - n| / max(1e-8, |a| + |n|).
GradCheckReport gradient_check(const LayerKind& layer, const Shape& input_shape, double eps,
                               double tolerance, std::uint64_t seed);

}  // namespace prefnet
