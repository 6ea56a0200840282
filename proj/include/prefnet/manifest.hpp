#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prefnet {

enum class Split { train, val, test, unassigned };
enum class Category { clean, unknown, mixed, no_face, partial_face, untagged };

std::string_view to_string(Split s);
std::string_view to_string(Category c);
Split parse_split(std::string_view text);
Category parse_category(std::string_view text);

struct ManifestEntry {
  std::string id;
  std::string path;
  /// 0 = dislike/male, 1 = like/female; empty while awaiting a label.
  std::optional<int> label;
  Split split = Split::unassigned;
  Category category = Category::untagged;

  bool operator==(const ManifestEntry&) const = default;
};

/// Dataset records persisted as CSV `id,path,label,split,category`. Relative
/// paths resolve against the directory holding the manifest file.
class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries, std::filesystem::path base_dir = {});

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

  /// Throws DataError on duplicate ids.
  void add(ManifestEntry entry);
  const ManifestEntry* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  ManifestEntry& at(std::size_t i) { return entries_[i]; }
  const ManifestEntry& at(std::size_t i) const { return entries_[i]; }

  std::filesystem::path resolve(const ManifestEntry& entry) const;
  std::vector<ManifestEntry> with_split(Split split) const;

 private:
  std::vector<ManifestEntry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::filesystem::path base_dir_;
};

std::string manifest_to_csv(const Manifest& manifest);
Manifest manifest_from_csv(std::string_view text, std::filesystem::path base_dir = {});
Manifest read_manifest(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over the target, so readers
/// never observe a partially written manifest.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.9;
  double val = 0.05;
  double test = 0.05;
};

/// Seeded split: n_val = round(n*val), n_test = round(n*test), the rest train.
Manifest split(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed);

/// Uniform sample without replacement, in sampled order.
std::vector<ManifestEntry> audit_sample(const Manifest& manifest, std::size_t n, std::uint64_t seed);

using CategoryCounts = std::array<std::size_t, 6>;  // indexed by Category
CategoryCounts tally_categories(const std::vector<ManifestEntry>& entries);
inline std::size_t count_of(const CategoryCounts& counts, Category c) {
  return counts[static_cast<std::size_t>(c)];
}

}  // namespace prefnet
