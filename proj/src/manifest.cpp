#include "prefnet/manifest.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "prefnet/error.hpp"
#include "prefnet/rng.hpp"

namespace prefnet {
namespace {

constexpr std::string_view kHeader = "id,path,label,split,category";

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw FormatError("manifest line " + std::to_string(line_no) + " has an unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
    case Split::unassigned:
      break;
  }
  return "unassigned";
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::clean:
      return "clean";
    case Category::unknown:
      return "unknown";
    case Category::mixed:
      return "mixed";
    case Category::no_face:
      return "no_face";
    case Category::partial_face:
      return "partial_face";
    case Category::untagged:
      break;
  }
  return "untagged";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text == "unassigned" || text.empty()) return Split::unassigned;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

Category parse_category(std::string_view text) {
  if (text == "clean") return Category::clean;
  if (text == "unknown") return Category::unknown;
  if (text == "mixed") return Category::mixed;
  if (text == "no_face") return Category::no_face;
  if (text == "partial_face") return Category::partial_face;
  if (text == "untagged" || text.empty()) return Category::untagged;
  throw FormatError("unknown category '" + std::string(text) + "'");
}

Manifest::Manifest(std::vector<ManifestEntry> entries, std::filesystem::path base_dir)
    : base_dir_(std::move(base_dir)) {
  entries_.reserve(entries.size());
  for (auto& e : entries) add(std::move(e));
}

void Manifest::add(ManifestEntry entry) {
  if (entry.id.empty()) throw DataError("manifest entries need a non-empty id");
  if (entry.label && *entry.label != 0 && *entry.label != 1) {
    throw LabelError("entry " + entry.id + " has label " + std::to_string(*entry.label) + "; labels are 0 or 1");
  }
  if (index_.contains(entry.id)) throw DataError("duplicate manifest id '" + entry.id + "'");
  index_.emplace(entry.id, entries_.size());
  entries_.push_back(std::move(entry));
}

const ManifestEntry* Manifest::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::optional<std::size_t> Manifest::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::filesystem::path Manifest::resolve(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.path);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

std::vector<ManifestEntry> Manifest::with_split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries_) {
    if (e.split == s) out.push_back(e);
  }
  return out;
}

std::string manifest_to_csv(const Manifest& manifest) {
  std::string out(kHeader);
  out.push_back('\n');
  for (const auto& e : manifest.entries()) {
    out += csv_field(e.id) + ',' + csv_field(e.path) + ',' + (e.label ? std::to_string(*e.label) : std::string()) +
           ',' + std::string(to_string(e.split)) + ',' + std::string(to_string(e.category)) + '\n';
  }
  return out;
}

Manifest manifest_from_csv(std::string_view text, std::filesystem::path base_dir) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw FormatError("manifest header must be '" + std::string(kHeader) + "'");
  Manifest manifest({}, std::move(base_dir));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != 5) {
      throw FormatError("manifest line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                        " fields, expected 5");
    }
    ManifestEntry e;
    e.id = std::move(fields[0]);
    e.path = std::move(fields[1]);
    if (!fields[2].empty()) {
      if (fields[2] != "0" && fields[2] != "1") {
        throw LabelError("manifest line " + std::to_string(line_no) + " has label '" + fields[2] +
                         "'; labels are 0 or 1");
      }
      e.label = fields[2] == "1" ? 1 : 0;
    }
    e.split = parse_split(fields[3]);
    e.category = parse_category(fields[4]);
    manifest.add(std::move(e));
  }
  return manifest;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return manifest_from_csv(ss.str(), path.parent_path());
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    const std::string text = manifest_to_csv(manifest);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.flush();
    if (!f) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Manifest split(const Manifest& manifest, const SplitRatios& r, std::uint64_t seed) {
  if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0) || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be positive and sum to 1");
  }
  const std::size_t n = manifest.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.val));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.test));
  if (n_val + n_test > n) throw ConfigError("split ratios leave no room for the training split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, "split");
  rng.shuffle(std::span<std::size_t>(order));

  Manifest out = manifest;
  for (std::size_t k = 0; k < n; ++k) {
    Split s = Split::train;
    if (k < n_val) {
      s = Split::val;
    } else if (k < n_val + n_test) {
      s = Split::test;
    }
    out.at(order[k]).split = s;
  }
  return out;
}

std::vector<ManifestEntry> audit_sample(const Manifest& manifest, std::size_t n, std::uint64_t seed) {
  if (n > manifest.size()) {
    throw ConfigError("audit sample of " + std::to_string(n) + " exceeds manifest size " +
                      std::to_string(manifest.size()));
  }
  std::vector<std::size_t> order(manifest.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng::stream(seed, "audit");
  // Partial Fisher-Yates: the first n positions form the sample.
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  std::vector<ManifestEntry> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(manifest.at(order[i]));
  return out;
}

CategoryCounts tally_categories(const std::vector<ManifestEntry>& entries) {
  CategoryCounts counts{};
  for (const auto& e : entries) ++counts[static_cast<std::size_t>(e.category)];
  return counts;
}

}  // namespace prefnet
