#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>

#include "prefnet/dataset.hpp"
#include "prefnet/manifest.hpp"
#include "prefnet/tensor.hpp"

namespace prefnet {

/// Decodes a PNG or JPEG into a (1, 3, size, size) RGB tensor in [0, 1].
/// Gray sources are replicated across channels and alpha is dropped. Resizing
/// is bilinear and skipped when the source already has the target extent.
/// Throws IngestionError naming the path when the file cannot be decoded.
Tensor<float> load_image(const std::filesystem::path& path, std::size_t target_size);

/// Writes one (3, H, W) sample in [0, 1] as an 8-bit PNG.
void save_png(const std::filesystem::path& path, std::span<const float> rgb, std::size_t height,
              std::size_t width);

/// Per-pixel, per-channel mean of the training examples, shape (1, C, H, W).
struct MeanImage {
  Tensor<float> mean;

  Shape shape() const { return mean.shape(); }
};

/// Accumulates in double. Throws DataError on an empty source.
MeanImage compute_mean(const ExampleSource& train);
/// Subtracts the mean from every sample of `batch`, then multiplies by
/// `pixel_scale`. A scale of 255 gives mean subtraction in 8-bit units.
void apply_mean(Tensor<float>& batch, const MeanImage& mean, float pixel_scale = 1.0f);
void apply_mean(std::span<float> sample, const MeanImage& mean, float pixel_scale = 1.0f);

void save_mean(const MeanImage& mean, const std::filesystem::path& path);
MeanImage load_mean(const std::filesystem::path& path);

/// Labeled manifest entries of one split, decoded lazily from disk.
class ManifestDataset final : public ExampleSource {
 public:
  /// Throws DataError if a selected entry is unlabeled.
  ManifestDataset(const Manifest& manifest, Split split, std::size_t target_size,
                  std::optional<MeanImage> mean = std::nullopt, float pixel_scale = 1.0f);

  std::size_t size() const override { return entries_.size(); }
  Shape example_shape() const override { return {1, 3, target_size_, target_size_}; }
  int label(std::size_t i) const override { return *entries_[i].label; }
  std::string id(std::size_t i) const override { return entries_[i].id; }
  void load(std::size_t i, std::span<float> out) const override;

  void set_mean(std::optional<MeanImage> mean);

 private:
  std::vector<ManifestEntry> entries_;
  std::vector<std::filesystem::path> paths_;
  std::size_t target_size_;
  std::optional<MeanImage> mean_;
  float pixel_scale_ = 1.0f;
};

}  // namespace prefnet
