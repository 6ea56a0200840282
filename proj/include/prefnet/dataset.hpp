#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prefnet/tensor.hpp"

namespace prefnet {

/// Random-access labeled examples of a fixed per-example shape.
class ExampleSource {
 public:
  virtual ~ExampleSource() = default;
  virtual std::size_t size() const = 0;
  /// Per-example extents with n = 1.
  virtual Shape example_shape() const = 0;
  virtual int label(std::size_t i) const = 0;
  virtual std::string id(std::size_t i) const = 0;
  /// Writes example i into `out` (example_shape().size() values).
  virtual void load(std::size_t i, std::span<float> out) const = 0;
};

/// Stacks the selected examples into an (indices.size(), C, H, W) batch.
Tensor<float> gather_batch(const ExampleSource& source, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const ExampleSource& source, std::span<const std::size_t> indices);

class InMemoryDataset final : public ExampleSource {
 public:
  InMemoryDataset() = default;
  InMemoryDataset(Tensor<float> examples, std::vector<int> labels, std::vector<std::string> ids = {});

  std::size_t size() const override { return labels_.size(); }
  Shape example_shape() const override;
  int label(std::size_t i) const override { return labels_[i]; }
  std::string id(std::size_t i) const override;
  void load(std::size_t i, std::span<float> out) const override;

  const Tensor<float>& examples() const { return examples_; }
  Tensor<float>& examples() { return examples_; }
  const std::vector<int>& labels() const { return labels_; }
  std::vector<int>& labels() { return labels_; }

  /// Copies the listed examples into a new dataset.
  InMemoryDataset subset(std::span<const std::size_t> indices) const;

 private:
  Tensor<float> examples_;
  std::vector<int> labels_;
  std::vector<std::string> ids_;
};

/// Materializes any source in memory.
InMemoryDataset materialize(const ExampleSource& source);

}  // namespace prefnet
