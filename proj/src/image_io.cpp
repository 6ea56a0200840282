#include "prefnet/image_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "prefnet/error.hpp"

namespace prefnet {
namespace {

constexpr char kMeanMagic[4] = {'S', 'W', 'M', 'N'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& f, const std::filesystem::path& path) {
  T v{};
  if (!f.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CorruptionError("truncated mean file " + path.string());
  return v;
}

}  // namespace

Tensor<float> load_image(const std::filesystem::path& path, std::size_t target_size) {
  if (target_size == 0) throw ConfigError("target size must be positive");
  cv::Mat img;
  try {
    // IMREAD_COLOR replicates gray and drops alpha, always yielding 8-bit BGR.
    img = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception& e) {
    throw IngestionError("cannot decode " + path.string() + ": " + e.what());
  }
  if (img.empty()) throw IngestionError("cannot read or decode image " + path.string());

  cv::Mat f32;
  img.convertTo(f32, CV_32FC3, 1.0 / 255.0);
  const int s = static_cast<int>(target_size);
  if (f32.rows != s || f32.cols != s) {
    cv::Mat resized;
    cv::resize(f32, resized, cv::Size(s, s), 0, 0, cv::INTER_LINEAR);
    f32 = resized;
  }

  Tensor<float> out({1, 3, target_size, target_size});
  for (int y = 0; y < s; ++y) {
    const auto* row = f32.ptr<cv::Vec3f>(y);
    for (int x = 0; x < s; ++x) {
      // BGR to RGB planes.
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = row[x][2 - c];
    }
  }
  return out;
}

void save_png(const std::filesystem::path& path, std::span<const float> rgb, std::size_t height,
              std::size_t width) {
  if (rgb.size() != 3 * height * width) throw ShapeError("save_png expects 3*H*W values");
  cv::Mat img(static_cast<int>(height), static_cast<int>(width), CV_8UC3);
  const std::size_t plane = height * width;
  for (std::size_t y = 0; y < height; ++y) {
    auto* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
    for (std::size_t x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(rgb[c * plane + y * width + x], 0.0f, 1.0f);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
  }
  if (!cv::imwrite(path.string(), img)) throw IngestionError("cannot write image " + path.string());
}

MeanImage compute_mean(const ExampleSource& train) {
  if (train.size() == 0) throw DataError("cannot compute a mean over an empty training split");
  const Shape s = train.example_shape();
  std::vector<double> acc(s.size(), 0.0);
  std::vector<float> buf(s.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    train.load(i, buf);
    for (std::size_t k = 0; k < buf.size(); ++k) acc[k] += buf[k];
  }
  MeanImage m{Tensor<float>(s)};
  const double inv = 1.0 / static_cast<double>(train.size());
  for (std::size_t k = 0; k < acc.size(); ++k) m.mean[k] = static_cast<float>(acc[k] * inv);
  return m;
}

void apply_mean(std::span<float> sample, const MeanImage& mean, float pixel_scale) {
  if (sample.size() != mean.mean.size()) {
    throw ShapeError("sample of " + std::to_string(sample.size()) + " values does not match mean image " +
                     mean.shape().str());
  }
  for (std::size_t k = 0; k < sample.size(); ++k) sample[k] = (sample[k] - mean.mean[k]) * pixel_scale;
}

void apply_mean(Tensor<float>& batch, const MeanImage& mean, float pixel_scale) {
  if (batch.shape().sample_size() != mean.mean.size()) {
    throw ShapeError("batch " + batch.shape().str() + " does not match mean image " + mean.shape().str());
  }
  for (std::size_t n = 0; n < batch.shape().n; ++n) apply_mean(batch.sample(n), mean, pixel_scale);
}

void save_mean(const MeanImage& mean, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f.write(kMeanMagic, 4);
    const Shape s = mean.shape();
    put<std::uint32_t>(f, static_cast<std::uint32_t>(s.c));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(s.h));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(s.w));
    f.write(reinterpret_cast<const char*>(mean.mean.ptr()),
            static_cast<std::streamsize>(mean.mean.size() * sizeof(float)));
    if (!f) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MeanImage load_mean(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open mean file " + path.string());
  char magic[4];
  if (!f.read(magic, 4)) throw CorruptionError("truncated mean file " + path.string());
  if (std::memcmp(magic, kMeanMagic, 4) != 0) throw FormatError(path.string() + " is not a mean image file");
  const auto c = get<std::uint32_t>(f, path);
  const auto h = get<std::uint32_t>(f, path);
  const auto w = get<std::uint32_t>(f, path);
  MeanImage m{Tensor<float>({1, c, h, w})};
  if (!f.read(reinterpret_cast<char*>(m.mean.ptr()), static_cast<std::streamsize>(m.mean.size() * sizeof(float)))) {
    throw CorruptionError("truncated mean file " + path.string());
  }
  if (f.peek() != std::char_traits<char>::eof()) throw CorruptionError("trailing bytes in " + path.string());
  for (float v : m.mean.data()) {
    if (!std::isfinite(v)) throw CorruptionError("non-finite value in mean file " + path.string());
  }
  return m;
}

ManifestDataset::ManifestDataset(const Manifest& manifest, Split split, std::size_t target_size,
                                 std::optional<MeanImage> mean, float pixel_scale)
    : entries_(manifest.with_split(split)), target_size_(target_size), pixel_scale_(pixel_scale) {
  if (!(pixel_scale > 0.0f)) throw ConfigError("pixel scale must be positive");
  for (const auto& e : entries_) {
    if (!e.label) throw DataError("entry " + e.id + " in split " + std::string(to_string(split)) + " has no label");
    paths_.push_back(manifest.resolve(e));
  }
  set_mean(std::move(mean));
}

void ManifestDataset::set_mean(std::optional<MeanImage> mean) {
  if (mean && mean->mean.size() != example_shape().size()) {
    throw ShapeError("mean image " + mean->shape().str() + " does not match input size " +
                     std::to_string(target_size_));
  }
  mean_ = std::move(mean);
}

void ManifestDataset::load(std::size_t i, std::span<float> out) const {
  const Tensor<float> img = load_image(paths_[i], target_size_);
  std::copy(img.data().begin(), img.data().end(), out.begin());
  if (mean_) {
    apply_mean(out, *mean_, pixel_scale_);
  } else if (pixel_scale_ != 1.0f) {
    for (float& v : out) v *= pixel_scale_;
  }
}

}  // namespace prefnet
