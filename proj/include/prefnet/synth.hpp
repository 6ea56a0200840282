#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prefnet/dataset.hpp"

namespace prefnet {

struct SynthOptions {
  std::size_t n = 1000;
  double noise_rate = 0.0;  // probability of flipping each observed label
  std::uint64_t seed = 0;
  std::size_t size = 250;   // square image extent; 64 for quick runs
};

/// Ellipse area fraction above which the true label is 1. Calibrated so that
/// roughly 53% of draws are positive.
inline constexpr double kSynthAreaThreshold = 0.0908;

/// Textured background in [0, 0.4] with one filled, rotated ellipse of
/// brightness in [0.5, 1]. Geometry and labels are drawn up front; pixels are
/// rasterized on demand, so large label-only studies stay cheap.
class SynthDataset final : public ExampleSource {
 public:
  explicit SynthDataset(const SynthOptions& opts);

  std::size_t size() const override { return labels_.size(); }
  Shape example_shape() const override { return {1, 3, opts_.size, opts_.size}; }
  /// Observed (possibly flipped) label.
  int label(std::size_t i) const override { return labels_[i]; }
  std::string id(std::size_t i) const override;
  void load(std::size_t i, std::span<float> out) const override;

  int true_label(std::size_t i) const { return true_labels_[i]; }
  std::size_t pixel_count(std::size_t i) const { return pixel_counts_[i]; }
  /// Minimum ellipse pixel count of a positive example, exclusive.
  double threshold() const { return threshold_; }
  const SynthOptions& options() const { return opts_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<int>& true_labels() const { return true_labels_; }

 private:
  struct Ellipse {
    double cx, cy, a, b, cos_t, sin_t, brightness;
    double tint[3];
    bool contains(double x, double y) const;
  };

  SynthOptions opts_;
  double threshold_ = 0.0;
  std::vector<Ellipse> ellipses_;
  std::vector<std::size_t> pixel_counts_;
  std::vector<int> true_labels_;
  std::vector<int> labels_;
};

/// Throws ArgumentError if n is 0 or noise_rate is outside [0, 0.5).
SynthDataset synth_generate(const SynthOptions& opts);

/// Thresholded count of bright pixels (channel mean above 0.45), mirroring the
/// generator's rule. Works on one (3, H, W) sample in [0, 1].
int synth_oracle_label(std::span<const float> sample, std::size_t size);

}  // namespace prefnet
