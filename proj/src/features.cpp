#include "prefnet/features.hpp"

#include <bit>
#include <fstream>
#include <set>
#include <sstream>

#include "prefnet/error.hpp"

namespace prefnet {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

void FeatureMatrix::validate() const {
  if (values.size() != rows * dim) {
    throw FormatError("feature matrix holds " + std::to_string(values.size()) + " values, expected " +
                      std::to_string(rows) + "x" + std::to_string(dim));
  }
  if (ids.size() != rows || labels.size() != rows) {
    throw FormatError("feature matrix has " + std::to_string(rows) + " rows but " + std::to_string(ids.size()) +
                      " ids and " + std::to_string(labels.size()) + " labels");
  }
  std::set<std::string_view> seen;
  for (const auto& id : ids) {
    if (id.empty() || id.find_first_of(",\n") != std::string::npos) {
      throw FormatError("feature id '" + id + "' is empty or contains a separator");
    }
    if (!seen.insert(id).second) throw FormatError("duplicate feature id '" + id + "'");
  }
}

void export_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
  fm.validate();
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f << "SWFT1 " << fm.rows << ' ' << fm.dim << '\n';
    f.write(reinterpret_cast<const char*>(fm.values.data()),
            static_cast<std::streamsize>(fm.values.size() * sizeof(float)));
    for (std::size_t r = 0; r < fm.rows; ++r) f << fm.ids[r] << ',' << fm.labels[r] << '\n';
    if (!f) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FeatureMatrix import_features(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open feature file " + path.string());
  std::string header;
  if (!std::getline(f, header)) throw FormatError(path.string() + ": missing header");
  std::istringstream hs(header);
  std::string magic;
  long long n = -1;
  long long d = -1;
  hs >> magic >> n >> d;
  if (magic != "SWFT1" || !hs || n < 0 || d <= 0) {
    throw FormatError(path.string() + ": header must be 'SWFT1 <n> <d>'");
  }
  FeatureMatrix fm;
  fm.rows = static_cast<std::size_t>(n);
  fm.dim = static_cast<std::size_t>(d);
  fm.values.resize(fm.rows * fm.dim);
  if (!f.read(reinterpret_cast<char*>(fm.values.data()),
              static_cast<std::streamsize>(fm.values.size() * sizeof(float)))) {
    throw FormatError(path.string() + ": fewer feature values than the header's " + std::to_string(n) + "x" +
                      std::to_string(d));
  }
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError(path.string() + ": trailer line '" + line + "' lacks a label");
    const std::string lab = line.substr(comma + 1);
    if (lab != "0" && lab != "1") throw FormatError(path.string() + ": label '" + lab + "' is not 0 or 1");
    fm.ids.push_back(line.substr(0, comma));
    fm.labels.push_back(lab == "1" ? 1 : 0);
  }
  if (fm.ids.size() != fm.rows) {
    throw FormatError(path.string() + ": header declares " + std::to_string(n) + " rows but " +
                      std::to_string(fm.ids.size()) + " id lines follow");
  }
  fm.validate();
  return fm;
}

InMemoryDataset to_dataset(const FeatureMatrix& fm) {
  fm.validate();
  Tensor<float> x({fm.rows, fm.dim, 1, 1}, fm.values);
  return InMemoryDataset(std::move(x), fm.labels, fm.ids);
}

}  // namespace prefnet
