// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "nilm/tensor.hpp"

namespace nilm {

/*
 * LSTM cell parameters.
 *
 * Each weight matrix is hidden x (hidden + input) and acts on the
 * concatenation [d_{t-1}, x_t], previous output first.
 *
 *   symbol    field           role
 *   F_t       forget_*        forget gate, sigmoid
 *   h_t       input_gate_*    input gate, sigmoid (not the hidden state)
 *   C~_t      candidate_*     candidate cell values, tanh
 *   O_t       output_gate_*   output gate, sigmoid
 *   C_t       LstmState::cell
 *   d_t       LstmState::output   O_t * tanh(C_t)
 */
struct LstmParams {
  Tensor forget_w, forget_b;
  Tensor input_gate_w, input_gate_b;
  Tensor candidate_w, candidate_b;
  Tensor output_gate_w, output_gate_b;

  std::size_t hidden() const { return forget_w.dim(0); }
  std::size_t input() const { return forget_w.dim(1) - forget_w.dim(0); }
};

/// Weights ~ normal(0, sqrt(2 / (hidden + input))), biases zero.
LstmParams make_lstm_params(std::size_t input, std::size_t hidden, Rng& rng);
LstmParams zero_lstm_params(std::size_t input, std::size_t hidden);

struct LstmState {
  Tensor cell;    // C
  Tensor output;  // d

  static LstmState zeros(std::size_t hidden);
};

struct LstmStepCache {
  Tensor concat;  // [d_{t-1}, x_t]
  Tensor prev_cell;
  Tensor forget;
  Tensor input_gate;
  Tensor candidate;
  Tensor output_gate;
  Tensor cell;
  Tensor cell_tanh;
  Tensor output;
};

struct LstmStep {
  LstmState next;
  LstmStepCache cache;
};

LstmStep lstm_cell_forward(const LstmParams& p, const LstmState& prev, const Tensor& x);

struct LstmSequence {
  Tensor outputs;  // T x hidden
  std::vector<LstmStepCache> caches;
  LstmState final_state;
};

/// Runs the cell over the rows of x_seq (T x input), starting from init.
LstmSequence lstm_sequence_forward(const LstmParams& p, const Tensor& x_seq, const LstmState& init);

struct LstmGradients {
  LstmParams params;
  Tensor inputs;       // T x input
  LstmState initial;   // gradient with respect to the initial state
};

/// Backpropagation through time. grad_outputs holds dL/dd_t for every step
/// (T x hidden); rows of zeros are fine for steps that do not feed the loss.
LstmGradients lstm_backward(const LstmParams& p, const std::vector<LstmStepCache>& caches,
                            const Tensor& grad_outputs);

}  // namespace nilm
