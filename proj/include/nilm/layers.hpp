// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "nilm/tensor.hpp"

namespace nilm {

struct Activation {
  enum class Kind { Sigmoid, Tanh, LeakyRelu, Softmax, Identity };

  Kind kind = Kind::Identity;
  /// Negative-side slope, used by LeakyRelu only.
  double alpha = 0.01;

  static Activation sigmoid() { return {Kind::Sigmoid}; }
  static Activation tanh() { return {Kind::Tanh}; }
  static Activation leaky_relu(double alpha = 0.01);
  static Activation softmax() { return {Kind::Softmax}; }
  static Activation identity() { return {Kind::Identity}; }

  friend bool operator==(const Activation&, const Activation&) = default;
};

const char* activation_name(Activation::Kind kind);

double sigmoid(double z);

/// Elementwise activation. Softmax normalizes over the final axis.
Tensor apply_activation(const Activation& act, const Tensor& z);

/// Gradient with respect to z given z, a = f(z) and dL/da.
Tensor activation_backward(const Activation& act, const Tensor& z, const Tensor& a, const Tensor& grad_a);

/// Output extent (W - F + 2P) / S + 1. Throws ShapeError when the division is
/// not exact or the padded input is smaller than the kernel.
int conv_output_size(int input, int kernel, int padding, int stride);

// ---------------------------------------------------------------------------
// Convolution

struct ConvLayer {
  Tensor kernels;  // out_ch x in_ch x F x F
  Tensor bias;     // out_ch
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::leaky_relu();

  std::size_t out_channels() const { return kernels.dim(0); }
  std::size_t in_channels() const { return kernels.dim(1); }
  std::size_t kernel_size() const { return kernels.dim(2); }
};

/// Kaiming-normal kernels with stddev sqrt(2 / (in_ch * F * F)), zero bias.
ConvLayer make_conv_layer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_size,
                          std::size_t stride, std::size_t padding, Activation act, Rng& rng);

struct ConvCache {
  Tensor input;
  Tensor pre_activation;
  Tensor output;
};

struct ConvForward {
  Tensor output;
  ConvCache cache;
};

struct ConvGradients {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

ConvForward conv2d_forward(const ConvLayer& layer, const Tensor& input);
ConvGradients conv2d_backward(const ConvLayer& layer, const ConvCache& cache, const Tensor& grad_out);

// ---------------------------------------------------------------------------
// Max pooling
//
// Odd extents behave as if padded with -inf, so the last window along an axis
// may be partial. Ties route to the lowest flat index.

struct PoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

struct PoolForward {
  Tensor output;
  PoolCache cache;
};

std::size_t pool_output_size(std::size_t input, std::size_t window, std::size_t stride);

PoolForward maxpool2d(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);
Tensor maxpool2d_backward(const PoolCache& cache, const Tensor& grad_out);

/// Smallest gap between the winner and runner-up of any window. Finite
/// differences are unreliable when this is below the probe step.
double pool_margin(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);

// ---------------------------------------------------------------------------
// Fully connected

struct DenseLayer {
  Tensor weights;  // out x in
  Tensor bias;     // out
  Activation activation = Activation::identity();

  std::size_t out_features() const { return weights.dim(0); }
  std::size_t in_features() const { return weights.dim(1); }
};

DenseLayer make_dense_layer(std::size_t in, std::size_t out, Activation act, Rng& rng);

struct DenseCache {
  Tensor input;
  Tensor pre_activation;
  Tensor output;
};

struct DenseForward {
  Tensor output;
  DenseCache cache;
};

struct DenseGradients {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseForward dense_forward(const DenseLayer& layer, const Tensor& input);
DenseGradients dense_backward(const DenseLayer& layer, const DenseCache& cache, const Tensor& grad_out);

}  // namespace nilm
