// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nilm/data.hpp"
#include "nilm/model.hpp"
#include "nilm/tensor.hpp"

namespace nilm {

// ---------------------------------------------------------------------------
// Loss

struct LossResult {
  double value = 0.0;
  Tensor grad_logits;
};

/// Throws ArgumentError unless the label is one-hot (exclusive) or a 0/1
/// vector (multi-label) of the right width.
void validate_label(OutputMode mode, const Tensor& label);

/*
 * Exclusive: categorical cross-entropy of softmax(logits), gradient s - y.
 * Multi-label: mean binary cross-entropy of sigmoid(logits), gradient
 * (s - y) / K. Both are evaluated through log-sum-exp / softplus so large
 * logits never produce log(0).
 */
LossResult loss_with_logits(OutputMode mode, const Tensor& logits, const Tensor& label);

/// The same losses evaluated directly on output scores (probabilities).
double loss_from_scores(OutputMode mode, const Tensor& scores, const Tensor& label);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam(const std::vector<Shape>& shapes, double learning_rate);
AdamState make_adam(const HybridParams& params, double learning_rate);

/// m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2;
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with bias-corrected moments.
void adam_step(AdamState& state, const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
void adam_step(AdamState& state, HybridParams& params, const HybridParams& grads);

/// Rescales g so its global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(HybridParams& grads, double max_norm);

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // running exact-match accuracy over the epoch's batches
  double test_accuracy = 0.0;   // exact-match accuracy after the epoch
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  bool stopped_early = false;

  /// epoch,train_loss,train_acc,test_acc,seconds
  std::string to_csv() const;
};

struct FitResult {
  HybridParams params;
  TrainHistory history;
};

/// Fraction of windows whose predicted state vector equals the label row.
double exact_match_accuracy(const HybridParams& params, const WindowDataset& data);

/*
 * Minibatch training: each epoch shuffles the training windows with a stream
 * derived from config.seed, averages loss gradients over the batch, clips the
 * global norm to config.clip_norm and takes one Adam step. Stops early once the
 * epoch's training accuracy reaches config.target_train_accuracy, when set.
 *
 * Throws ArgumentError for empty datasets or arity mismatches and
 * DivergenceError when the loss or the parameters stop being finite.
 */
FitResult fit(const ModelConfig& config, HybridParams params, const WindowDataset& train, const WindowDataset& test);

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_coords_per_tensor = 200;  // all coordinates when the tensor is smaller
  std::uint64_t seed = 0;
  /// Lower bound on the relative-error denominator max(|analytic|, |numeric|).
  /// A central difference of a loss near 1 carries about eps / h ~ 2e-11 of
  /// rounding noise at h = 1e-5, so below ~1e-6 the ratio measures rounding,
  /// not the gradient.
  double denominator_floor = 1e-6;
};

struct TensorCheck {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0.0;

  bool passed() const;
  double max_rel_error() const;
  std::string describe() const;
};

/// Perturbs each sampled coordinate of `params` in place by +-step, evaluates
/// `loss`, restores the value and compares (f+ - f-) / 2h with `analytic`.
GradCheckReport gradient_check(const std::function<double()>& loss, const std::vector<NamedTensor>& params,
                               const std::vector<const Tensor*>& analytic, const GradCheckOptions& options = {});

/// Full-model check of the training loss for one (window, label) pair.
GradCheckReport gradient_check_model(HybridParams& params, const Tensor& window, const Tensor& label,
                                     const GradCheckOptions& options = {});

struct RandomGradCheck {
  std::size_t instances = 0;
  std::size_t resampled = 0;  // draws rejected for sitting near a kink
  double max_rel_error = 0.0;
  bool passed = true;
  std::string first_failure;
};

/*
 * Gradient-checks `instances` random models of the given config, each with a
 * random window in [0, 1) and a random legal label. Parameters (biases
 * included) are drawn at initialization scale. Draws whose kink_margin falls
 * below min_margin are discarded and redrawn.
 */
RandomGradCheck gradient_check_random_models(const ModelConfig& config, std::size_t instances, std::uint64_t seed,
                                             const GradCheckOptions& options = {}, double min_margin = 1e-3);

}  // namespace nilm
