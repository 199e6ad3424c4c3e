// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nilm/layers.hpp"
#include "nilm/lstm.hpp"
#include "nilm/tensor.hpp"

namespace nilm {

enum class OutputMode { SoftmaxExclusive, SigmoidMultiLabel };

/// Which branches feed the classifier head. The single-branch variants are
/// ablations of the hybrid: the surviving branch's mapping layer feeds the
/// head directly.
enum class Architecture { Hybrid, CnnOnly, LstmOnly };

const char* to_string(OutputMode mode);
const char* to_string(Architecture arch);
OutputMode parse_output_mode(const std::string& text);
Architecture parse_architecture(const std::string& text);

struct ModelConfig {
  std::size_t window_len = 100;  // must be a perfect square
  std::size_t appliance_count = 9;
  std::size_t conv1_kernels = 64;
  std::size_t conv2_kernels = 128;
  std::size_t kernel_size = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t lstm_hidden = 64;
  std::size_t map_dim = 64;
  double leaky_alpha = 0.01;
  double learning_rate = 1e-4;
  int epochs = 200;
  std::size_t batch_size = 32;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
  std::optional<double> target_train_accuracy;  // early stop once reached
  OutputMode output_mode = OutputMode::SoftmaxExclusive;
  Architecture arch = Architecture::Hybrid;
  std::uint64_t seed = 0;

  bool uses_cnn() const { return arch != Architecture::LstmOnly; }
  bool uses_lstm() const { return arch != Architecture::CnnOnly; }
  std::size_t image_side() const;

  /// Throws ConfigError on a non-square window or any non-positive extent.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Spatial extents through conv1 -> pool -> conv2 -> pool.
struct CnnShapes {
  std::size_t image, conv1, pool1, conv2, pool2, flattened;
};
CnnShapes cnn_shapes(const ModelConfig& config);

/// key = value lines, one per field, in a fixed order.
std::string format_config(const ModelConfig& config);
/// Applies one key = value entry. Unknown keys and malformed values throw ConfigError.
void apply_config_entry(ModelConfig& config, const std::string& key, const std::string& value);
ModelConfig parse_config(const std::string& text);

struct CnnBranch {
  ConvLayer conv1;
  ConvLayer conv2;
  DenseLayer map;
};

struct LstmBranch {
  LstmParams cell;
  DenseLayer map;
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct ConstNamedTensor {
  std::string name;
  const Tensor* tensor;
};

/// Every learnable tensor of the model. Also used as the container for
/// gradients and optimizer moments, which mirror the parameter layout.
struct HybridParams {
  ModelConfig config;
  std::optional<CnnBranch> cnn;
  std::optional<LstmBranch> lstm;
  DenseLayer head;  // identity activation; the output nonlinearity is applied separately

  /// Stable traversal order: cnn.*, lstm.*, head.*
  std::vector<NamedTensor> tensors();
  std::vector<ConstNamedTensor> tensors() const;
  std::size_t parameter_count() const;

  friend bool operator==(const HybridParams&, const HybridParams&);
};

bool operator==(const CnnBranch& a, const CnnBranch& b);
bool operator==(const LstmBranch& a, const LstmBranch& b);

HybridParams build_model(const ModelConfig& config, Rng& rng);
/// Same layout as build_model with every tensor zero.
HybridParams zero_model(const ModelConfig& config);
HybridParams zeros_like(const HybridParams& params);

/// into += g, tensor by tensor.
void accumulate(HybridParams& into, const HybridParams& g);
void scale_in_place(HybridParams& params, double factor);
double global_norm(const HybridParams& params);

struct CnnCache {
  ConvCache conv1;
  PoolCache pool1;
  ConvCache conv2;
  PoolCache pool2;
  DenseCache map;
};

struct LstmBranchCache {
  std::vector<LstmStepCache> steps;
  DenseCache map;
};

struct HybridCache {
  std::optional<CnnCache> cnn;
  std::optional<LstmBranchCache> lstm;
  DenseCache head;
  Tensor logits;
  Tensor scores;
};

struct HybridForward {
  Tensor scores;
  HybridCache cache;
};

/// Softmax or sigmoid over head logits depending on the output mode.
Tensor output_activation(OutputMode mode, const Tensor& logits);

HybridForward hybrid_forward(const HybridParams& p, const Tensor& window);

/// Gradient of a loss with respect to the head logits, back through the model.
HybridParams hybrid_backward_logits(const HybridParams& p, const HybridCache& cache, const Tensor& grad_logits);

/// Same, starting from dL/dscores (chains through the output nonlinearity).
HybridParams hybrid_backward(const HybridParams& p, const HybridCache& cache, const Tensor& grad_scores);

/// One-hot argmax (lowest index wins ties) or threshold at 0.5.
Tensor states_from_scores(OutputMode mode, const Tensor& scores);
Tensor predict_states(const HybridParams& p, const Tensor& window);

/// Smallest distance of any LeakyReLU pre-activation from its kink, or of any
/// pooling window's winner from its runner-up. Finite-difference checks are
/// only meaningful when this comfortably exceeds the probe step.
double kink_margin(const HybridCache& cache);

}  // namespace nilm
