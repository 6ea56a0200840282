#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "prefnet/dataset.hpp"

namespace prefnet {

/// n x d activations with row-aligned ids and labels.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major
  std::vector<std::string> ids;
  std::vector<int> labels;

  /// Throws FormatError when the sizes disagree or ids repeat.
  void validate() const;
  bool operator==(const FeatureMatrix&) const = default;
};

/// File layout: a text line `SWFT1 <n> <d>`, then n*d little-endian float32
/// values row by row, then n text lines `id,label`.
void export_features(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix import_features(const std::filesystem::path& path);

/// Rows become (d, 1, 1) examples for the logistic-regression head.
InMemoryDataset to_dataset(const FeatureMatrix& fm);

}  // namespace prefnet
