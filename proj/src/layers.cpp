// SPDX-License-Identifier: Apache-2.0
#include "nilm/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace nilm {

Activation Activation::leaky_relu(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("LeakyReLU alpha must lie in (0, 1)");
  return {Kind::LeakyRelu, alpha};
}

const char* activation_name(Activation::Kind kind) {
  switch (kind) {
    case Activation::Kind::Sigmoid: return "sigmoid";
    case Activation::Kind::Tanh: return "tanh";
    case Activation::Kind::LeakyRelu: return "leaky_relu";
    case Activation::Kind::Softmax: return "softmax";
    case Activation::Kind::Identity: return "identity";
  }
  return "?";
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace {

void softmax_rows(std::span<const double> z, std::span<double> out, std::size_t width) {
  for (std::size_t row = 0; row < z.size(); row += width) {
    const double peak = *std::max_element(z.begin() + row, z.begin() + row + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[row + j] = std::exp(z[row + j] - peak);
      total += out[row + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[row + j] /= total;
  }
}

}  // namespace

Tensor apply_activation(const Activation& act, const Tensor& z) {
  std::vector<double> out(z.size());
  const auto zv = z.values();
  switch (act.kind) {
    case Activation::Kind::Sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(zv[i]);
      break;
    case Activation::Kind::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(zv[i]);
      break;
    case Activation::Kind::LeakyRelu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = zv[i] > 0.0 ? zv[i] : act.alpha * zv[i];
      break;
    case Activation::Kind::Softmax:
      softmax_rows(zv, out, z.shape().back());
      break;
    case Activation::Kind::Identity:
      out.assign(zv.begin(), zv.end());
      break;
  }
  return Tensor(z.shape(), std::move(out));
}

Tensor activation_backward(const Activation& act, const Tensor& z, const Tensor& a, const Tensor& grad_a) {
  require_same_shape(z, grad_a, "activation_backward");
  require_same_shape(a, grad_a, "activation_backward");
  std::vector<double> out(z.size());
  const auto zv = z.values();
  const auto av = a.values();
  const auto gv = grad_a.values();
  switch (act.kind) {
    case Activation::Kind::Sigmoid:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = gv[i] * av[i] * (1.0 - av[i]);
      break;
    case Activation::Kind::Tanh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = gv[i] * (1.0 - av[i] * av[i]);
      break;
    case Activation::Kind::LeakyRelu:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = zv[i] > 0.0 ? gv[i] : act.alpha * gv[i];
      break;
    case Activation::Kind::Softmax: {
      // J^T g = s * (g - <s, g>) per row.
      const std::size_t width = z.shape().back();
      for (std::size_t row = 0; row < out.size(); row += width) {
        const double inner = dot(av.subspan(row, width), gv.subspan(row, width));
        for (std::size_t j = 0; j < width; ++j) out[row + j] = av[row + j] * (gv[row + j] - inner);
      }
      break;
    }
    case Activation::Kind::Identity:
      out.assign(gv.begin(), gv.end());
      break;
  }
  return Tensor(z.shape(), std::move(out));
}

int conv_output_size(int input, int kernel, int padding, int stride) {
  if (input < 1 || kernel < 1 || stride < 1 || padding < 0) {
    throw ShapeError("conv_output_size: need W, F, S >= 1 and P >= 0");
  }
  const int span = input - kernel + 2 * padding;
  if (span < 0) {
    throw ShapeError("conv_output_size: kernel " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(input + 2 * padding));
  }
  if (span % stride != 0) {
    throw ShapeError("conv_output_size: (W - F + 2P) = " + std::to_string(span) + " is not divisible by stride " +
                     std::to_string(stride));
  }
  return span / stride + 1;
}

// ---------------------------------------------------------------------------

ConvLayer make_conv_layer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                          std::size_t stride, std::size_t padding, Activation act, Rng& rng) {
  if (in_channels == 0 || out_channels == 0 || kernel_size == 0 || stride == 0) {
    throw ConfigError("conv layer extents must be positive");
  }
  const double fan_in = static_cast<double>(in_channels * kernel_size * kernel_size);
  ConvLayer layer;
  layer.kernels = sample_normal(rng, {out_channels, in_channels, kernel_size, kernel_size}, 0.0,
                                std::sqrt(2.0 / fan_in));
  layer.bias = Tensor::zeros({out_channels});
  layer.stride = stride;
  layer.padding = padding;
  layer.activation = act;
  return layer;
}

namespace {

struct ConvGeometry {
  std::size_t in_ch, height, width, out_ch, kernel, stride, padding, out_h, out_w;

  // Output indices o with 0 <= o*S + k - P < extent.
  std::pair<std::size_t, std::size_t> valid_range(std::size_t k, std::size_t extent, std::size_t out) const {
    const long p = static_cast<long>(padding), kk = static_cast<long>(k), s = static_cast<long>(stride);
    long lo = 0;
    if (kk < p) lo = (p - kk + s - 1) / s;
    long hi = (static_cast<long>(extent) - 1 + p - kk);
    hi = hi < 0 ? -1 : hi / s;
    hi = std::min(hi, static_cast<long>(out) - 1);
    if (hi < lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi + 1)};
  }
};

ConvGeometry conv_geometry(const ConvLayer& layer, const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("conv2d: input must be channels x height x width, got " + shape_to_string(input.shape()));
  }
  if (layer.kernels.rank() != 4 || layer.kernels.dim(2) != layer.kernels.dim(3)) {
    throw DimensionError("conv2d: kernels must be out x in x F x F, got " + shape_to_string(layer.kernels.shape()));
  }
  if (input.dim(0) != layer.in_channels()) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(0)) + " channels, layer expects " +
                         std::to_string(layer.in_channels()));
  }
  ConvGeometry g{};
  g.in_ch = input.dim(0);
  g.height = input.dim(1);
  g.width = input.dim(2);
  g.out_ch = layer.out_channels();
  g.kernel = layer.kernel_size();
  g.stride = layer.stride;
  g.padding = layer.padding;
  g.out_h = static_cast<std::size_t>(conv_output_size(static_cast<int>(g.height), static_cast<int>(g.kernel),
                                                      static_cast<int>(g.padding), static_cast<int>(g.stride)));
  g.out_w = static_cast<std::size_t>(conv_output_size(static_cast<int>(g.width), static_cast<int>(g.kernel),
                                                      static_cast<int>(g.padding), static_cast<int>(g.stride)));
  return g;
}

}  // namespace

ConvForward conv2d_forward(const ConvLayer& layer, const Tensor& input) {
  const auto g = conv_geometry(layer, input);
  std::vector<double> z(g.out_ch * g.out_h * g.out_w);
  const auto in = input.values();
  const auto k = layer.kernels.values();
  for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
    double* zc = &z[oc * g.out_h * g.out_w];
    std::fill(zc, zc + g.out_h * g.out_w, layer.bias[oc]);
    for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
      const double* plane = &in[ic * g.height * g.width];
      for (std::size_t a = 0; a < g.kernel; ++a) {
        const auto [y0, y1] = g.valid_range(a, g.height, g.out_h);
        for (std::size_t b = 0; b < g.kernel; ++b) {
          const auto [x0, x1] = g.valid_range(b, g.width, g.out_w);
          const double w = k[((oc * g.in_ch + ic) * g.kernel + a) * g.kernel + b];
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const double* row = plane + (oy * g.stride + a - g.padding) * g.width;
            double* zrow = zc + oy * g.out_w;
            for (std::size_t ox = x0; ox < x1; ++ox) zrow[ox] += w * row[ox * g.stride + b - g.padding];
          }
        }
      }
    }
  }
  Tensor pre({g.out_ch, g.out_h, g.out_w}, std::move(z));
  Tensor out = apply_activation(layer.activation, pre);
  return {out, ConvCache{input, std::move(pre), out}};
}

ConvGradients conv2d_backward(const ConvLayer& layer, const ConvCache& cache, const Tensor& grad_out) {
  const auto g = conv_geometry(layer, cache.input);
  const Shape expected{g.out_ch, g.out_h, g.out_w};
  if (grad_out.shape() != expected || cache.pre_activation.shape() != expected) {
    throw DimensionError("conv2d_backward: gradient " + shape_to_string(grad_out.shape()) +
                         " does not match forward output " + shape_to_string(expected));
  }
  const Tensor dz = activation_backward(layer.activation, cache.pre_activation, cache.output, grad_out);
  const auto in = cache.input.values();
  const auto k = layer.kernels.values();
  const auto dzv = dz.values();

  std::vector<double> d_in(cache.input.size(), 0.0);
  std::vector<double> d_k(layer.kernels.size(), 0.0);
  std::vector<double> d_b(g.out_ch, 0.0);

  for (std::size_t oc = 0; oc < g.out_ch; ++oc) {
    const double* dzc = &dzv[oc * g.out_h * g.out_w];
    for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) d_b[oc] += dzc[i];
    for (std::size_t ic = 0; ic < g.in_ch; ++ic) {
      const double* plane = &in[ic * g.height * g.width];
      double* d_plane = &d_in[ic * g.height * g.width];
      for (std::size_t a = 0; a < g.kernel; ++a) {
        const auto [y0, y1] = g.valid_range(a, g.height, g.out_h);
        for (std::size_t b = 0; b < g.kernel; ++b) {
          const auto [x0, x1] = g.valid_range(b, g.width, g.out_w);
          const std::size_t kidx = ((oc * g.in_ch + ic) * g.kernel + a) * g.kernel + b;
          const double w = k[kidx];
          double acc = 0.0;
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const std::size_t base = (oy * g.stride + a - g.padding) * g.width;
            const double* row = plane + base;
            double* d_row = d_plane + base;
            const double* dzrow = dzc + oy * g.out_w;
            for (std::size_t ox = x0; ox < x1; ++ox) {
              const std::size_t ix = ox * g.stride + b - g.padding;
              acc += dzrow[ox] * row[ix];
              d_row[ix] += w * dzrow[ox];
            }
          }
          d_k[kidx] += acc;
        }
      }
    }
  }
  return {Tensor(cache.input.shape(), std::move(d_in)), Tensor(layer.kernels.shape(), std::move(d_k)),
          Tensor({g.out_ch}, std::move(d_b))};
}

// ---------------------------------------------------------------------------

std::size_t pool_output_size(std::size_t input, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ShapeError("pooling window and stride must be positive");
  if (input <= window) return 1;
  return (input - window + stride - 1) / stride + 1;
}

namespace {

void require_pool_input(const Tensor& input) {
  if (input.rank() != 3) {
    throw DimensionError("maxpool2d: input must be channels x height x width, got " +
                         shape_to_string(input.shape()));
  }
}

}  // namespace

PoolForward maxpool2d(const Tensor& input, std::size_t window, std::size_t stride) {
  require_pool_input(input);
  const std::size_t ch = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = pool_output_size(h, window, stride), ow = pool_output_size(w, window, stride);
  std::vector<double> out(ch * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto in = input.values();
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = 0;
        double best_value = -std::numeric_limits<double>::infinity();
        // Row-major scan with strict '>' keeps the lowest flat index on ties.
        for (std::size_t y = oy * stride; y < std::min(oy * stride + window, h); ++y) {
          for (std::size_t x = ox * stride; x < std::min(ox * stride + window, w); ++x) {
            const std::size_t idx = (c * h + y) * w + x;
            if (in[idx] > best_value) {
              best_value = in[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        out[o] = best_value;
        argmax[o] = best;
      }
    }
  }
  return {Tensor({ch, oh, ow}, std::move(out)), PoolCache{input.shape(), std::move(argmax)}};
}

Tensor maxpool2d_backward(const PoolCache& cache, const Tensor& grad_out) {
  if (grad_out.size() != cache.argmax.size()) {
    throw DimensionError("maxpool2d_backward: gradient " + shape_to_string(grad_out.shape()) +
                         " does not match cached output of " + std::to_string(cache.argmax.size()) + " elements");
  }
  Tensor grad_in(cache.input_shape);
  auto g = grad_in.data();
  for (std::size_t o = 0; o < cache.argmax.size(); ++o) g[cache.argmax[o]] += grad_out[o];
  return grad_in;
}

double pool_margin(const Tensor& input, std::size_t window, std::size_t stride) {
  require_pool_input(input);
  const std::size_t ch = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = pool_output_size(h, window, stride), ow = pool_output_size(w, window, stride);
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double first = -std::numeric_limits<double>::infinity(), second = first;
        for (std::size_t y = oy * stride; y < std::min(oy * stride + window, h); ++y) {
          for (std::size_t x = ox * stride; x < std::min(ox * stride + window, w); ++x) {
            const double v = input.at(c, y, x);
            if (v > first) {
              second = first;
              first = v;
            } else if (v > second) {
              second = v;
            }
          }
        }
        if (std::isfinite(second)) margin = std::min(margin, first - second);
      }
    }
  }
  return margin;
}

// ---------------------------------------------------------------------------

DenseLayer make_dense_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  if (in == 0 || out == 0) throw ConfigError("dense layer extents must be positive");
  DenseLayer layer;
  layer.weights = sample_normal(rng, {out, in}, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
  layer.bias = Tensor::zeros({out});
  layer.activation = act;
  return layer;
}

DenseForward dense_forward(const DenseLayer& layer, const Tensor& input) {
  const std::size_t out = layer.out_features(), in = layer.in_features();
  if (input.rank() != 1 || input.size() != in) {
    throw DimensionError("dense_forward: input " + shape_to_string(input.shape()) + " does not match weights " +
                         shape_to_string(layer.weights.shape()));
  }
  std::vector<double> z(out);
  const auto w = layer.weights.values();
  for (std::size_t i = 0; i < out; ++i) z[i] = dot(w.subspan(i * in, in), input.values()) + layer.bias[i];
  Tensor pre({out}, std::move(z));
  Tensor a = apply_activation(layer.activation, pre);
  return {a, DenseCache{input, std::move(pre), a}};
}

DenseGradients dense_backward(const DenseLayer& layer, const DenseCache& cache, const Tensor& grad_out) {
  const std::size_t out = layer.out_features(), in = layer.in_features();
  if (grad_out.rank() != 1 || grad_out.size() != out || cache.input.size() != in) {
    throw DimensionError("dense_backward: gradient " + shape_to_string(grad_out.shape()) +
                         " does not match weights " + shape_to_string(layer.weights.shape()));
  }
  const Tensor dz = activation_backward(layer.activation, cache.pre_activation, cache.output, grad_out);
  const auto w = layer.weights.values();
  const auto x = cache.input.values();
  std::vector<double> d_in(in, 0.0), d_w(out * in);
  for (std::size_t i = 0; i < out; ++i) {
    const double gi = dz[i];
    const double* wrow = &w[i * in];
    double* dwrow = &d_w[i * in];
    for (std::size_t j = 0; j < in; ++j) {
      dwrow[j] = gi * x[j];
      d_in[j] += gi * wrow[j];
    }
  }
  return {Tensor({in}, std::move(d_in)), Tensor(layer.weights.shape(), std::move(d_w)), dz};
}

}  // namespace nilm
