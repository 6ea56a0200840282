#include "prefnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "prefnet/error.hpp"
#include "prefnet/kernels.hpp"

namespace prefnet {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

std::string describe(const LayerKind& layer) {
  struct Visitor {
    std::string operator()(const Conv3x3& l) const {
      return "Conv3x3-" + std::to_string(l.out_maps) +
             (l.bias == BiasMode::untied ? " (untied)" : " (tied)");
    }
    std::string operator()(const MaxPool2x2&) const { return "MaxPool-2x2"; }
    std::string operator()(const ReLU&) const { return "ReLU"; }
    std::string operator()(const Flatten&) const { return "Flatten"; }
    std::string operator()(const FullyConnected& l) const { return "FC-" + std::to_string(l.out_units); }
    std::string operator()(const Dropout& l) const {
      std::ostringstream os;
      os << "Dropout(" << l.p << ')';
      return os.str();
    }
    std::string operator()(const SoftmaxNLL&) const { return "Softmax"; }
  };
  return std::visit(Visitor{}, layer);
}

namespace {

void require_nonempty(const Shape& s, const char* what) {
  if (s.n == 0 || s.c == 0 || s.h == 0 || s.w == 0) {
    throw ShapeError(std::string(what) + ": empty input tensor " + s.str());
  }
}

template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t height, std::size_t width, T* col) {
  const std::size_t oh = height - 2;
  const std::size_t ow = width - 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        T* dst = col + ((c * 3 + ky) * 3 + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          std::memcpy(dst + y * ow, in + (c * height + y + ky) * width + kx, ow * sizeof(T));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width, T* in) {
  const std::size_t oh = height - 2;
  const std::size_t ow = width - 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < 3; ++ky) {
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const T* src = col + ((c * 3 + ky) * 3 + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          T* dst = in + (c * height + y + ky) * width + kx;
          const T* row = src + y * ow;
          for (std::size_t x = 0; x < ow; ++x) dst[x] += row[x];
        }
      }
    }
  }
}

void check_labels(std::span<const int> labels, std::size_t n, std::size_t classes) {
  if (labels.size() != n) {
    throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch size " +
                     std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " at position " + std::to_string(i) +
                       " is outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

Shape conv3x3_output_shape(const Shape& input, std::size_t out_maps) {
  if (input.h < 3 || input.w < 3) {
    throw ShapeError("Conv3x3 needs spatial extent >= 3, got input " + input.str());
  }
  return Shape{input.n, out_maps, input.h - 2, input.w - 2};
}

Shape conv3x3_weight_shape(std::size_t in_maps, std::size_t out_maps) {
  return Shape{out_maps, in_maps, 3, 3};
}

Shape conv3x3_bias_shape(const Shape& output, BiasMode mode) {
  return mode == BiasMode::tied ? Shape{1, output.c, 1, 1} : Shape{1, output.c, output.h, output.w};
}

Shape maxpool2x2_output_shape(const Shape& input) {
  return Shape{input.n, input.c, (input.h + 1) / 2, (input.w + 1) / 2};
}

Shape fc_weight_shape(std::size_t in_units, std::size_t out_units) {
  return Shape{in_units, out_units, 1, 1};
}

Shape fc_bias_shape(std::size_t out_units) { return Shape{1, out_units, 1, 1}; }

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                          BiasMode mode) {
  const Shape& is = input.shape();
  require_nonempty(is, "Conv3x3");
  const Shape& ws = weights.shape();
  if (ws.c != is.c || ws.h != 3 || ws.w != 3 || ws.n == 0) {
    throw ShapeError("Conv3x3 weights " + ws.str() + " do not match input " + is.str());
  }
  const Shape os = conv3x3_output_shape(is, ws.n);
  const Shape bs = conv3x3_bias_shape(os, mode);
  if (bias.shape() != bs) {
    throw ShapeError("Conv3x3 bias " + bias.shape().str() + " does not match expected " + bs.str());
  }

  Tensor<T> out(os);
  const std::size_t spatial = os.h * os.w;
  const std::size_t patch = is.c * 9;
  std::vector<T> col(patch * spatial);
  for (std::size_t n = 0; n < is.n; ++n) {
    T* dst = out.sample(n).data();
    if (mode == BiasMode::untied) {
      std::copy(bias.ptr(), bias.ptr() + bias.size(), dst);
    } else {
      for (std::size_t o = 0; o < os.c; ++o) std::fill(dst + o * spatial, dst + (o + 1) * spatial, bias[o]);
    }
    im2col(input.sample(n).data(), is.c, is.h, is.w, col.data());
    kernels::GemmArgs g;
    g.m = os.c;
    g.n = spatial;
    g.k = patch;
    g.lda = patch;
    g.ldb = spatial;
    g.ldc = spatial;
    g.accumulate = true;
    kernels::gemm(g, weights.ptr(), col.data(), dst);
  }
  return out;
}

template <typename T>
ConvGradients<T> conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weights, BiasMode mode,
                                  const Tensor<T>& grad_out, bool want_input_grad) {
  const Shape& is = input.shape();
  require_nonempty(is, "Conv3x3 backward");
  const Shape& ws = weights.shape();
  if (ws.c != is.c || ws.h != 3 || ws.w != 3) {
    throw ShapeError("Conv3x3 weights " + ws.str() + " do not match input " + is.str());
  }
  const Shape os = conv3x3_output_shape(is, ws.n);
  if (grad_out.shape() != os) {
    throw ShapeError("Conv3x3 grad_out " + grad_out.shape().str() + " does not match output " + os.str());
  }

  ConvGradients<T> grads;
  grads.weights = Tensor<T>(ws);
  grads.bias = Tensor<T>(conv3x3_bias_shape(os, mode));
  if (want_input_grad) grads.input = Tensor<T>(is);

  const std::size_t spatial = os.h * os.w;
  const std::size_t patch = is.c * 9;
  std::vector<T> col(patch * spatial);
  std::vector<T> grad_col(want_input_grad ? patch * spatial : 0);
  for (std::size_t n = 0; n < is.n; ++n) {
    const T* gy = grad_out.sample(n).data();
    im2col(input.sample(n).data(), is.c, is.h, is.w, col.data());

    kernels::GemmArgs gw;
    gw.trans_b = true;
    gw.m = os.c;
    gw.n = patch;
    gw.k = spatial;
    gw.lda = spatial;
    gw.ldb = spatial;
    gw.ldc = patch;
    gw.accumulate = true;
    kernels::gemm(gw, gy, col.data(), grads.weights.ptr());

    if (mode == BiasMode::untied) {
      kernels::axpy(grads.bias.size(), T{1}, gy, grads.bias.ptr());
    } else {
      for (std::size_t o = 0; o < os.c; ++o) {
        grads.bias[o] += static_cast<T>(kernels::sum(spatial, gy + o * spatial));
      }
    }

    if (want_input_grad) {
      kernels::GemmArgs gx;
      gx.trans_a = true;
      gx.m = patch;
      gx.n = spatial;
      gx.k = os.c;
      gx.lda = patch;
      gx.ldb = spatial;
      gx.ldc = spatial;
      kernels::gemm(gx, weights.ptr(), gy, grad_col.data());
      col2im_add(grad_col.data(), is.c, is.h, is.w, grads.input.sample(n).data());
    }
  }
  return grads;
}

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& input) {
  const Shape& is = input.shape();
  require_nonempty(is, "MaxPool2x2");
  const Shape os = maxpool2x2_output_shape(is);
  PoolResult<T> result{Tensor<T>(os), std::vector<std::size_t>(os.size())};
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < is.n * is.c; ++plane) {
    const std::size_t base = plane * is.h * is.w;
    for (std::size_t y = 0; y < os.h; ++y) {
      const std::size_t y1 = std::min(2 * y + 2, is.h);
      for (std::size_t x = 0; x < os.w; ++x) {
        const std::size_t x1 = std::min(2 * x + 2, is.w);
        std::size_t best = base + 2 * y * is.w + 2 * x;
        // Row-major scan with strict comparison keeps the smallest index on ties.
        for (std::size_t yy = 2 * y; yy < y1; ++yy) {
          for (std::size_t xx = 2 * x; xx < x1; ++xx) {
            const std::size_t idx = base + yy * is.w + xx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        result.output[o] = input[best];
        result.argmax[o] = best;
        ++o;
      }
    }
  }
  return result;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                              const Tensor<T>& grad_out) {
  const Shape os = maxpool2x2_output_shape(input_shape);
  if (grad_out.shape() != os || argmax.size() != os.size()) {
    throw ShapeError("MaxPool2x2 grad_out " + grad_out.shape().str() + " does not match output " +
                     os.str());
  }
  Tensor<T> grad_in(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  kernels::relu_forward(input.size(), input.ptr(), out.ptr());
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  if (input.shape() != grad_out.shape()) {
    throw ShapeError("ReLU grad_out " + grad_out.shape().str() + " does not match input " +
                     input.shape().str());
  }
  Tensor<T> grad_in(input.shape());
  kernels::relu_backward(input.size(), input.ptr(), grad_out.ptr(), grad_in.ptr());
  return grad_in;
}

template <typename T>
Tensor<T> flatten_forward(Tensor<T> input) {
  const Shape s = input.shape();
  input.reshape(Shape{s.n, s.sample_size(), 1, 1});
  return input;
}

template <typename T>
Tensor<T> flatten_backward(Tensor<T> grad_out, const Shape& input_shape) {
  grad_out.reshape(input_shape);
  return grad_out;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const Shape& is = input.shape();
  const std::size_t in_units = is.sample_size();
  const Shape& ws = weights.shape();
  if (ws.n != in_units || ws.h != 1 || ws.w != 1) {
    throw ShapeError("FC weights " + ws.str() + " do not match input " + is.str());
  }
  if (bias.shape() != fc_bias_shape(ws.c)) {
    throw ShapeError("FC bias " + bias.shape().str() + " does not match weights " + ws.str());
  }
  Tensor<T> out(Shape{is.n, ws.c, 1, 1});
  for (std::size_t n = 0; n < is.n; ++n) std::copy(bias.ptr(), bias.ptr() + ws.c, out.sample(n).data());
  kernels::GemmArgs g;
  g.m = is.n;
  g.n = ws.c;
  g.k = in_units;
  g.lda = in_units;
  g.ldb = ws.c;
  g.ldc = ws.c;
  g.accumulate = true;
  kernels::gemm(g, input.ptr(), weights.ptr(), out.ptr());
  return out;
}

template <typename T>
FcGradients<T> fc_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_out,
                           bool want_input_grad) {
  const Shape& is = input.shape();
  const std::size_t in_units = is.sample_size();
  const Shape& ws = weights.shape();
  if (ws.n != in_units) {
    throw ShapeError("FC weights " + ws.str() + " do not match input " + is.str());
  }
  if (grad_out.shape() != Shape{is.n, ws.c, 1, 1}) {
    throw ShapeError("FC grad_out " + grad_out.shape().str() + " does not match output (" +
                     std::to_string(is.n) + "," + std::to_string(ws.c) + ",1,1)");
  }
  FcGradients<T> grads;
  grads.weights = Tensor<T>(ws);
  grads.bias = Tensor<T>(fc_bias_shape(ws.c));

  kernels::GemmArgs gw;
  gw.trans_a = true;
  gw.m = in_units;
  gw.n = ws.c;
  gw.k = is.n;
  gw.lda = in_units;
  gw.ldb = ws.c;
  gw.ldc = ws.c;
  kernels::gemm(gw, input.ptr(), grad_out.ptr(), grads.weights.ptr());

  for (std::size_t n = 0; n < is.n; ++n) {
    kernels::axpy(ws.c, T{1}, grad_out.sample(n).data(), grads.bias.ptr());
  }

  if (want_input_grad) {
    grads.input = Tensor<T>(is);
    kernels::GemmArgs gx;
    gx.trans_b = true;
    gx.m = is.n;
    gx.n = in_units;
    gx.k = ws.c;
    gx.lda = ws.c;
    gx.ldb = ws.c;
    gx.ldc = in_units;
    kernels::gemm(gx, grad_out.ptr(), weights.ptr(), grads.input.ptr());
  }
  return grads;
}

template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability " + std::to_string(p) + " is outside [0, 1)");
  }
  if (mode == Mode::test) return DropoutResult<T>{input, Tensor<T>()};
  DropoutResult<T> result{Tensor<T>(input.shape()), Tensor<T>(input.shape())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < input.size(); ++i) {
    result.mask[i] = rng.uniform_open() < p ? T{0} : keep_scale;
  }
  kernels::multiply(input.size(), input.ptr(), result.mask.ptr(), result.output.ptr());
  return result;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_out, const Tensor<T>& mask) {
  if (mask.empty()) return grad_out;
  if (mask.shape() != grad_out.shape()) {
    throw ShapeError("dropout grad_out " + grad_out.shape().str() + " does not match mask " +
                     mask.shape().str());
  }
  Tensor<T> grad_in(grad_out.shape());
  kernels::multiply(grad_out.size(), grad_out.ptr(), mask.ptr(), grad_in.ptr());
  return grad_in;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  const Shape& s = logits.shape();
  const std::size_t k = s.sample_size();
  Tensor<T> probs(Shape{s.n, k, 1, 1});
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = logits.sample(n).data();
    T* p = probs.sample(n).data();
    const T zmax = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(static_cast<double>(z[j] - zmax));
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = static_cast<T>(std::exp(static_cast<double>(z[j] - zmax)) / total);
    }
  }
  return probs;
}

template <typename T>
SoftmaxNllResult<T> softmax_nll_forward(const Tensor<T>& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  require_nonempty(s, "SoftmaxNLL");
  const std::size_t k = s.sample_size();
  check_labels(labels, s.n, k);
  SoftmaxNllResult<T> result{softmax(logits), 0.0};
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* z = logits.sample(n).data();
    const double zmax = static_cast<double>(*std::max_element(z, z + k));
    double lse = 0.0;
    for (std::size_t j = 0; j < k; ++j) lse += std::exp(static_cast<double>(z[j]) - zmax);
    total += zmax + std::log(lse) - static_cast<double>(z[labels[n]]);
  }
  result.loss = total / static_cast<double>(s.n);
  return result;
}

template <typename T>
Tensor<T> softmax_nll_backward(const Tensor<T>& probs, std::span<const int> labels) {
  const Shape& s = probs.shape();
  const std::size_t k = s.sample_size();
  check_labels(labels, s.n, k);
  Tensor<T> grad(s);
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(s.n));
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t j = 0; j < k; ++j) {
      const T target = static_cast<std::size_t>(labels[n]) == j ? T{1} : T{0};
      grad[n * k + j] = (probs[n * k + j] - target) * inv_n;
    }
  }
  return grad;
}

#define PREFNET_INSTANTIATE_LAYERS(T)                                                               \
  template Tensor<T> conv3x3_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BiasMode); \
  template ConvGradients<T> conv3x3_backward(const Tensor<T>&, const Tensor<T>&, BiasMode,          \
                                             const Tensor<T>&, bool);                               \
  template PoolResult<T> maxpool2x2_forward(const Tensor<T>&);                                      \
  template Tensor<T> maxpool2x2_backward(const Shape&, std::span<const std::size_t>,                \
                                         const Tensor<T>&);                                         \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> flatten_forward(Tensor<T>);                                                    \
  template Tensor<T> flatten_backward(Tensor<T>, const Shape&);                                     \
  template Tensor<T> fc_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template FcGradients<T> fc_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);  \
  template DropoutResult<T> dropout_forward(const Tensor<T>&, double, Mode, Rng&);                  \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> softmax(const Tensor<T>&);                                                     \
  template SoftmaxNllResult<T> softmax_nll_forward(const Tensor<T>&, std::span<const int>);         \
  template Tensor<T> softmax_nll_backward(const Tensor<T>&, std::span<const int>);

PREFNET_INSTANTIATE_LAYERS(float)
PREFNET_INSTANTIATE_LAYERS(double)

#undef PREFNET_INSTANTIATE_LAYERS

}  // namespace prefnet
