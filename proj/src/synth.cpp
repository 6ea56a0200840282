#include "prefnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "prefnet/error.hpp"
#include "prefnet/rng.hpp"

namespace prefnet {
namespace {

constexpr double kBrightCut = 0.45;

double threshold_for(std::size_t size) {
  return kSynthAreaThreshold * static_cast<double>(size * size);
}

}  // namespace

bool SynthDataset::Ellipse::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double u = dx * cos_t + dy * sin_t;
  const double v = -dx * sin_t + dy * cos_t;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

SynthDataset::SynthDataset(const SynthOptions& opts) : opts_(opts), threshold_(threshold_for(opts.size)) {
  if (opts.n == 0) throw ArgumentError("synthetic dataset needs n >= 1");
  if (!(opts.noise_rate >= 0.0 && opts.noise_rate < 0.5)) throw ArgumentError("noise rate must be in [0, 0.5)");
  if (opts.size < 8) throw ArgumentError("synthetic images need size >= 8");

  const double s = static_cast<double>(opts.size);
  Rng geo = Rng::stream(opts.seed, "synth-geometry");
  // Independent of the geometry stream, so noisy and clean variants share images.
  Rng flip = Rng::stream(opts.seed, "synth-noise");

  ellipses_.reserve(opts.n);
  for (std::size_t i = 0; i < opts.n; ++i) {
    Ellipse e{};
    e.a = s * geo.uniform(0.10, 0.32);
    e.b = e.a * geo.uniform(0.45, 1.0);
    const double theta = geo.uniform(0.0, std::numbers::pi);
    e.cos_t = std::cos(theta);
    e.sin_t = std::sin(theta);
    // Keep the whole ellipse inside the frame.
    e.cx = geo.uniform(e.a, s - e.a);
    e.cy = geo.uniform(e.a, s - e.a);
    e.brightness = geo.uniform(0.5, 1.0);
    for (double& t : e.tint) t = geo.uniform(0.95, 1.0);

    std::size_t count = 0;
    const auto lo_y = static_cast<std::size_t>(std::max(0.0, std::floor(e.cy - e.a)));
    const auto hi_y = static_cast<std::size_t>(std::min(s - 1, std::ceil(e.cy + e.a)));
    const auto lo_x = static_cast<std::size_t>(std::max(0.0, std::floor(e.cx - e.a)));
    const auto hi_x = static_cast<std::size_t>(std::min(s - 1, std::ceil(e.cx + e.a)));
    for (std::size_t y = lo_y; y <= hi_y; ++y) {
      for (std::size_t x = lo_x; x <= hi_x; ++x) {
        if (e.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) ++count;
      }
    }
    const int truth = static_cast<double>(count) > threshold_ ? 1 : 0;
    const int observed = flip.bernoulli(opts.noise_rate) ? 1 - truth : truth;
    ellipses_.push_back(e);
    pixel_counts_.push_back(count);
    true_labels_.push_back(truth);
    labels_.push_back(observed);
  }
}

std::string SynthDataset::id(std::size_t i) const {
  return "synth-" + std::to_string(i);
}

void SynthDataset::load(std::size_t i, std::span<float> out) const {
  const std::size_t s = opts_.size;
  if (out.size() != 3 * s * s) throw ShapeError("synthetic sample buffer has the wrong size");
  const Ellipse& e = ellipses_[i];
  Rng tex = Rng::stream(mix_seed(opts_.seed) ^ static_cast<std::uint64_t>(i), "synth-texture");

  // Background: a base colour plus a few low-frequency coloured gratings and
  // light pixel noise, clamped to [0, 0.4]. The structure survives pooling,
  // so every image carries its own distinguishable backdrop.
  struct Grating {
    double fx, fy, phase, amp[3];
  };
  double base[3];
  for (double& b : base) b = tex.uniform(0.08, 0.22);
  Grating gratings[3];
  for (auto& g : gratings) {
    const double cycles = tex.uniform(0.5, 4.0);
    const double angle = tex.uniform(0.0, 2.0 * std::numbers::pi);
    g.fx = 2.0 * std::numbers::pi * cycles * std::cos(angle) / static_cast<double>(s);
    g.fy = 2.0 * std::numbers::pi * cycles * std::sin(angle) / static_cast<double>(s);
    g.phase = tex.uniform(0.0, 2.0 * std::numbers::pi);
    for (double& a : g.amp) a = tex.uniform(0.0, 0.07);
  }

  const std::size_t plane = s * s;
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const std::size_t p = y * s + x;
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      double bg[3] = {base[0], base[1], base[2]};
      for (const auto& g : gratings) {
        const double w = std::sin(g.fx * px + g.fy * py + g.phase);
        for (int c = 0; c < 3; ++c) bg[c] += g.amp[c] * w;
      }
      // Noise is drawn for every pixel so the texture does not depend on
      // where the ellipse sits.
      double noise[3];
      for (double& v : noise) v = tex.uniform(-0.03, 0.03);
      const bool inside = e.contains(px, py);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = inside ? e.brightness * e.tint[c] : std::clamp(bg[c] + noise[c], 0.0, 0.4);
        out[c * plane + p] = static_cast<float>(v);
      }
    }
  }
}

SynthDataset synth_generate(const SynthOptions& opts) {
  return SynthDataset(opts);
}

int synth_oracle_label(std::span<const float> sample, std::size_t size) {
  const std::size_t plane = size * size;
  if (sample.size() != 3 * plane) throw ShapeError("oracle expects a (3, size, size) sample");
  std::size_t bright = 0;
  for (std::size_t p = 0; p < plane; ++p) {
    const double m = (static_cast<double>(sample[p]) + sample[plane + p] + sample[2 * plane + p]) / 3.0;
    if (m > kBrightCut) ++bright;
  }
  return static_cast<double>(bright) > threshold_for(size) ? 1 : 0;
}

}  // namespace prefnet
