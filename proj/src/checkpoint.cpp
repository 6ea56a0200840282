#include "prefnet/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "prefnet/error.hpp"
#include "prefnet/rng.hpp"

namespace prefnet {
namespace {

constexpr char kMagic[4] = {'P', 'N', 'C', 'K'};

template <typename U>
void put_le(std::string& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_floats(std::string& out, const Tensor<float>& t) {
  const std::size_t offset = out.size();
  out.resize(offset + t.size() * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data() + offset, t.ptr(), t.size() * 4);
  } else {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(t[i]);
      for (std::size_t b = 0; b < 4; ++b) out[offset + i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename U>
  U get() {
    need(sizeof(U), "integer field");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string text() {
    const auto len = get<std::uint64_t>();
    need(len, "text block");
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void floats(float* dst, std::size_t count) {
    if (count > (bytes_.size() - pos_) / 4) need(count * 4, "parameter array");
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(dst, bytes_.data() + pos_, count * 4);
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) {
          bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i * 4 + b])) << (8 * b);
        }
        dst[i] = std::bit_cast<float>(bits);
      }
    }
    pos_ += count * 4;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::uint64_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw CorruptionError("checkpoint " + source_ + " is truncated while reading " + what + " at byte " +
                            std::to_string(pos_));
    }
  }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string serialize_meta(const CheckpointMeta& m) {
  std::string s;
  s += "epoch=" + std::to_string(m.epoch) + "\n";
  s += "train_err=" + format_double(m.train_err) + "\n";
  s += "val_err=" + format_double(m.val_err) + "\n";
  s += "seed=" + std::to_string(m.seed) + "\n";
  s += "created_at=" + m.created_at + "\n";
  return s;
}

CheckpointMeta parse_meta(const std::string& text) {
  CheckpointMeta m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    const char* first = value.data();
    const char* last = value.data() + value.size();
    std::from_chars_result res{last, std::errc{}};
    if (key == "epoch") {
      res = std::from_chars(first, last, m.epoch);
    } else if (key == "train_err") {
      res = std::from_chars(first, last, m.train_err);
    } else if (key == "val_err") {
      res = std::from_chars(first, last, m.val_err);
    } else if (key == "seed") {
      res = std::from_chars(first, last, m.seed);
    } else if (key == "created_at") {
      m.created_at = value;
    }
    if (res.ec != std::errc{}) throw CorruptionError("checkpoint metadata field '" + key + "' is malformed");
  }
  return m;
}

void draw_uniform(Tensor<float>& t, Rng& rng) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(-0.06 + 0.12 * rng.uniform_open());
  }
}

}  // namespace

FreezeMask FreezeMask::all_trainable(const ModelSpec& spec) {
  return FreezeMask{std::vector<bool>(param_groups(spec).size(), true)};
}

FreezeMask FreezeMask::last_k(const ModelSpec& spec, std::size_t k) {
  const auto layers = parameterized_layers(spec);
  if (k == 0 || k > layers.size()) {
    throw ConfigError("cannot unfreeze the last " + std::to_string(k) + " of " + std::to_string(layers.size()) +
                      " parameterized layers");
  }
  const std::size_t first = layers[layers.size() - k];
  FreezeMask mask;
  for (const auto& g : param_groups(spec)) mask.trainable.push_back(g.layer >= first);
  return mask;
}

bool FreezeMask::any() const {
  for (bool t : trainable) {
    if (t) return true;
  }
  return false;
}

std::size_t FreezeMask::trainable_params(const ModelSpec& spec) const {
  const auto groups = param_groups(spec);
  std::size_t total = 0;
  for (std::size_t i = 0; i < groups.size() && i < trainable.size(); ++i) {
    if (trainable[i]) total += groups[i].shape.size();
  }
  return total;
}

Checkpoint init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.params.resize(spec.layers.size());
  ckpt.meta.seed = seed;
  Rng rng = Rng::stream(seed, "init");
  for (const auto& g : param_groups(spec)) {
    if (g.is_bias) {
      ckpt.params[g.layer].bias = Tensor<float>(g.shape, 0.0f);
    } else {
      ckpt.params[g.layer].weights = Tensor<float>(g.shape);
      draw_uniform(ckpt.params[g.layer].weights, rng);
    }
  }
  return ckpt;
}

void reinit_last_k(Checkpoint& ckpt, std::size_t k, std::uint64_t seed) {
  const FreezeMask mask = FreezeMask::last_k(ckpt.spec, k);
  const auto groups = param_groups(ckpt.spec);
  Rng rng = Rng::stream(seed, "init");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (!mask.trainable[i]) continue;
    const auto& g = groups[i];
    if (g.is_bias) {
      ckpt.params[g.layer].bias = Tensor<float>(g.shape, 0.0f);
    } else {
      ckpt.params[g.layer].weights = Tensor<float>(g.shape);
      draw_uniform(ckpt.params[g.layer].weights, rng);
    }
  }
}

void validate_params(const ModelSpec& spec, const ParamSet& params) {
  if (params.size() != spec.layers.size()) {
    throw CorruptionError("parameter set has " + std::to_string(params.size()) + " layers, spec has " +
                          std::to_string(spec.layers.size()));
  }
  for (const auto& g : param_groups(spec)) {
    const Tensor<float>& t = g.is_bias ? params[g.layer].bias : params[g.layer].weights;
    if (t.shape() != g.shape) {
      throw CorruptionError("layer " + std::to_string(g.layer) + (g.is_bias ? " bias " : " weights ") +
                            t.shape().str() + " does not match expected " + g.shape.str());
    }
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!has_params(spec.layers[i]) && (!params[i].weights.empty() || !params[i].bias.empty())) {
      throw CorruptionError("layer " + std::to_string(i) + " has no parameters but carries arrays");
    }
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  validate_params(ckpt.spec, ckpt.params);
  std::string out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string spec_text = serialize_spec(ckpt.spec);
  put_le<std::uint64_t>(out, spec_text.size());
  out += spec_text;
  const std::string meta_text = serialize_meta(ckpt.meta);
  put_le<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  const auto groups = param_groups(ckpt.spec);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(groups.size()));
  for (const auto& g : groups) {
    const Tensor<float>& t = g.is_bias ? ckpt.params[g.layer].bias : ckpt.params[g.layer].weights;
    put_le<std::uint64_t>(out, t.size());
    put_floats(out, t);
  }

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open " + tmp.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(bytes, path.string());
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  r.get<std::uint32_t>();
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }

  Checkpoint ckpt;
  try {
    ckpt.spec = parse_spec(r.text());
    validate_spec(ckpt.spec);
  } catch (const CorruptionError&) {
    throw;
  } catch (const Error& e) {
    throw CorruptionError("checkpoint " + path.string() + " carries an invalid model spec: " + e.what());
  }
  ckpt.meta = parse_meta(r.text());

  const auto groups = param_groups(ckpt.spec);
  const auto count = r.get<std::uint32_t>();
  if (count != groups.size()) {
    throw CorruptionError("checkpoint " + path.string() + " holds " + std::to_string(count) +
                          " arrays, spec expects " + std::to_string(groups.size()));
  }
  ckpt.params.resize(ckpt.spec.layers.size());
  for (const auto& g : groups) {
    const auto elements = r.get<std::uint64_t>();
    if (elements != g.shape.size()) {
      throw CorruptionError("checkpoint " + path.string() + ": layer " + std::to_string(g.layer) +
                            (g.is_bias ? " bias" : " weights") + " has " + std::to_string(elements) +
                            " values, expected " + std::to_string(g.shape.size()) + " for shape " +
                            g.shape.str());
    }
    Tensor<float> t(g.shape);
    r.floats(t.ptr(), t.size());
    (g.is_bias ? ckpt.params[g.layer].bias : ckpt.params[g.layer].weights) = std::move(t);
  }
  if (r.remaining() != 0) {
    throw CorruptionError("checkpoint " + path.string() + " has " + std::to_string(r.remaining()) +
                          " trailing bytes");
  }
  return ckpt;
}

bool params_bitwise_equal(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  auto same = [](const Tensor<float>& x, const Tensor<float>& y) {
    return x.shape() == y.shape() && (x.size() == 0 || std::memcmp(x.ptr(), y.ptr(), x.size() * sizeof(float)) == 0);
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same(a[i].weights, b[i].weights) || !same(a[i].bias, b[i].bias)) return false;
  }
  return true;
}

}  // namespace prefnet
