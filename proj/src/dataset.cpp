#include "prefnet/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "prefnet/error.hpp"

namespace prefnet {

Tensor<float> gather_batch(const ExampleSource& source, std::span<const std::size_t> indices) {
  Shape s = source.example_shape();
  s.n = indices.size();
  Tensor<float> batch(s);
  for (std::size_t b = 0; b < indices.size(); ++b) source.load(indices[b], batch.sample(b));
  return batch;
}

std::vector<int> gather_labels(const ExampleSource& source, std::span<const std::size_t> indices) {
  std::vector<int> labels(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) labels[b] = source.label(indices[b]);
  return labels;
}

InMemoryDataset::InMemoryDataset(Tensor<float> examples, std::vector<int> labels, std::vector<std::string> ids)
    : examples_(std::move(examples)), labels_(std::move(labels)), ids_(std::move(ids)) {
  if (examples_.shape().n != labels_.size()) {
    throw ShapeError("dataset has " + std::to_string(examples_.shape().n) + " examples but " +
                     std::to_string(labels_.size()) + " labels");
  }
  if (!ids_.empty() && ids_.size() != labels_.size()) {
    throw ShapeError("dataset has " + std::to_string(labels_.size()) + " labels but " +
                     std::to_string(ids_.size()) + " ids");
  }
}

Shape InMemoryDataset::example_shape() const {
  Shape s = examples_.shape();
  s.n = 1;
  return s;
}

std::string InMemoryDataset::id(std::size_t i) const {
  return ids_.empty() ? std::to_string(i) : ids_[i];
}

void InMemoryDataset::load(std::size_t i, std::span<float> out) const {
  const auto src = examples_.sample(i);
  std::copy(src.begin(), src.end(), out.begin());
}

InMemoryDataset InMemoryDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<std::string> ids;
  if (!ids_.empty()) {
    for (auto i : indices) ids.push_back(ids_[i]);
  }
  return InMemoryDataset(gather_batch(*this, indices), gather_labels(*this, indices), std::move(ids));
}

InMemoryDataset materialize(const ExampleSource& source) {
  std::vector<std::size_t> all(source.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::string> ids;
  for (auto i : all) ids.push_back(source.id(i));
  return InMemoryDataset(gather_batch(source, all), gather_labels(source, all), std::move(ids));
}

}  // namespace prefnet
