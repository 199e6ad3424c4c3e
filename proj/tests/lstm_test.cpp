// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "nilm/errors.hpp"
#include "nilm/lstm.hpp"
#include "test_util.hpp"

namespace nilm {
namespace {

using testing::max_rel_error;
using testing::numeric_gradient;
using testing::uniform_tensor;
using testing::weighted_sum;

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

LstmParams random_params(Rng& rng, std::size_t input, std::size_t hidden, double scale = 1.0) {
  LstmParams p = zero_lstm_params(input, hidden);
  for (Tensor* t : {&p.forget_w, &p.forget_b, &p.input_gate_w, &p.input_gate_b, &p.candidate_w, &p.candidate_b,
                    &p.output_gate_w, &p.output_gate_b}) {
    *t = uniform_tensor(rng, t->shape(), -scale, scale);
  }
  return p;
}

std::vector<Tensor*> param_list(LstmParams& p) {
  return {&p.forget_w,      &p.forget_b,      &p.input_gate_w,  &p.input_gate_b,
          &p.candidate_w,   &p.candidate_b,   &p.output_gate_w, &p.output_gate_b};
}

// One step computed element by element from the gate definitions.
LstmState scalar_step(const LstmParams& p, const LstmState& prev, const Tensor& x) {
  const std::size_t h = p.hidden(), in = p.input(), width = h + in;
  auto z = [&](std::size_t j) { return j < h ? prev.output[j] : x[j - h]; };
  auto pre = [&](const Tensor& w, const Tensor& b, std::size_t r) {
    double s = b[r];
    for (std::size_t j = 0; j < width; ++j) s += w[r * width + j] * z(j);
    return s;
  };
  LstmState next = LstmState::zeros(h);
  for (std::size_t r = 0; r < h; ++r) {
    const double f = sig(pre(p.forget_w, p.forget_b, r));
    const double i = sig(pre(p.input_gate_w, p.input_gate_b, r));
    const double c = std::tanh(pre(p.candidate_w, p.candidate_b, r));
    const double o = sig(pre(p.output_gate_w, p.output_gate_b, r));
    next.cell[r] = f * prev.cell[r] + i * c;
    next.output[r] = o * std::tanh(next.cell[r]);
  }
  return next;
}

TEST(LstmCell, ZeroParametersGiveHalfGatesAndZeroState) {
  const LstmParams p = zero_lstm_params(2, 3);
  const auto step = lstm_cell_forward(p, LstmState::zeros(3), Tensor::from({0.4, -7.0}));
  EXPECT_EQ(step.cache.forget, Tensor::full({3}, 0.5));
  EXPECT_EQ(step.cache.input_gate, Tensor::full({3}, 0.5));
  EXPECT_EQ(step.cache.output_gate, Tensor::full({3}, 0.5));
  EXPECT_EQ(step.cache.candidate, Tensor({3}));
  EXPECT_EQ(step.next.cell, Tensor({3}));
  EXPECT_EQ(step.next.output, Tensor({3}));
}

TEST(LstmCell, SaturatedForgetGateKeepsTheCell) {
  LstmParams p = zero_lstm_params(1, 2);
  p.forget_b = Tensor::full({2}, 100.0);
  LstmState prev = LstmState::zeros(2);
  prev.cell = Tensor::from({0.8, -1.7});
  const auto step = lstm_cell_forward(p, prev, Tensor::from({3.0}));
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_NEAR(step.next.cell[r], prev.cell[r], 1e-12);
    EXPECT_NEAR(step.next.output[r], 0.5 * std::tanh(prev.cell[r]), 1e-12);
  }
}

TEST(LstmCell, MatchesScalarOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const LstmParams p = random_params(rng, 2, 3);
    LstmState prev{uniform_tensor(rng, {3}), uniform_tensor(rng, {3})};
    const Tensor x = uniform_tensor(rng, {2});
    const auto step = lstm_cell_forward(p, prev, x);
    const auto oracle = scalar_step(p, prev, x);
    EXPECT_LE(max_abs_diff(step.next.cell, oracle.cell), 1e-12);
    EXPECT_LE(max_abs_diff(step.next.output, oracle.output), 1e-12);
  }
}

TEST(LstmCell, RejectsWrongInputWidth) {
  const LstmParams p = zero_lstm_params(2, 3);
  EXPECT_THROW(lstm_cell_forward(p, LstmState::zeros(3), Tensor({3})), DimensionError);
}

TEST(LstmSequence, SingleStepEqualsCellCall) {
  Rng rng(5);
  const LstmParams p = random_params(rng, 2, 3);
  const Tensor x = uniform_tensor(rng, {1, 2});
  const auto seq = lstm_sequence_forward(p, x, LstmState::zeros(3));
  const auto step = lstm_cell_forward(p, LstmState::zeros(3), x.reshaped({2}));
  EXPECT_EQ(seq.final_state.output, step.next.output);
  EXPECT_EQ(seq.final_state.cell, step.next.cell);
}

TEST(LstmSequence, ZeroParametersGiveZeroOutputs) {
  Rng rng(7);
  const auto seq = lstm_sequence_forward(zero_lstm_params(1, 4), uniform_tensor(rng, {9, 1}), LstmState::zeros(4));
  for (double v : seq.outputs.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmSequence, ZeroInputZeroBiasGivesZeroOutputs) {
  Rng rng(8);
  LstmParams p = random_params(rng, 2, 3);
  for (Tensor* b : {&p.forget_b, &p.input_gate_b, &p.candidate_b, &p.output_gate_b}) *b = Tensor(b->shape());
  for (std::size_t t : {1u, 5u, 40u}) {
    const auto seq = lstm_sequence_forward(p, Tensor({t, 2}), LstmState::zeros(3));
    for (double v : seq.outputs.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(LstmSequence, EqualsRepeatedCellCalls) {
  Rng rng(9);
  const LstmParams p = random_params(rng, 2, 3);
  const Tensor x = uniform_tensor(rng, {5, 2});
  LstmState state{uniform_tensor(rng, {3}), uniform_tensor(rng, {3})};
  const auto seq = lstm_sequence_forward(p, x, state);
  for (std::size_t t = 0; t < 5; ++t) {
    state = lstm_cell_forward(p, state, Tensor({2}, {x.at(t, 0), x.at(t, 1)})).next;
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(seq.outputs.at(t, r), state.output[r]);
  }
}

TEST(LstmSequence, RejectsEmptyOrFlatSequences) {
  const LstmParams p = zero_lstm_params(1, 2);
  EXPECT_THROW(lstm_sequence_forward(p, Tensor(), LstmState::zeros(2)), ArgumentError);
  EXPECT_THROW(lstm_sequence_forward(p, Tensor({4}), LstmState::zeros(2)), ArgumentError);
}

TEST(LstmSequence, GateRangesAndCellBound) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const LstmParams p = random_params(rng, 1, 4, 3.0);
    const auto seq = lstm_sequence_forward(p, uniform_tensor(rng, {30, 1}, -5.0, 5.0), LstmState::zeros(4));
    Tensor prev_cell({4});
    for (const auto& c : seq.caches) {
      for (std::size_t r = 0; r < 4; ++r) {
        for (double g : {c.forget[r], c.input_gate[r], c.output_gate[r]}) {
          EXPECT_GT(g, 0.0);
          EXPECT_LT(g, 1.0);
        }
        EXPECT_LT(std::abs(c.candidate[r]), 1.0);
        EXPECT_LT(std::abs(c.output[r]), 1.0);
        EXPECT_LE(std::abs(c.cell[r]), std::abs(prev_cell[r]) + 1.0);
      }
      prev_cell = c.cell;
    }
  }
}

// ---------------------------------------------------------------------------

TEST(LstmBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(13);
  LstmParams p = random_params(rng, 1, 3);
  const auto seq = lstm_sequence_forward(p, uniform_tensor(rng, {4, 1}), LstmState::zeros(3));
  auto g = lstm_backward(p, seq.caches, Tensor({4, 3}));
  for (Tensor* t : param_list(g.params)) {
    for (double v : t->values()) EXPECT_EQ(v, 0.0);
  }
  for (double v : g.inputs.values()) EXPECT_EQ(v, 0.0);
}

// d = o * tanh(f c0 + i g) with every gate a scalar affine function of
// [d0, x]; the derivatives below are written out by hand.
TEST(LstmBackward, ScalarStepMatchesClosedForm) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    LstmParams p = random_params(rng, 1, 1);
    const double x = 2.0 * rng.uniform() - 1.0, d0 = 2.0 * rng.uniform() - 1.0, c0 = 2.0 * rng.uniform() - 1.0;
    const auto seq = lstm_sequence_forward(p, Tensor({1, 1}, {x}), LstmState{Tensor::from({c0}), Tensor::from({d0})});
    const auto g = lstm_backward(p, seq.caches, Tensor({1, 1}, {1.0}));

    auto affine = [&](const Tensor& w, const Tensor& b) { return w[0] * d0 + w[1] * x + b[0]; };
    const double f = sig(affine(p.forget_w, p.forget_b)), i = sig(affine(p.input_gate_w, p.input_gate_b));
    const double gc = std::tanh(affine(p.candidate_w, p.candidate_b)), o = sig(affine(p.output_gate_w, p.output_gate_b));
    const double tc = std::tanh(f * c0 + i * gc);
    const double dc = o * (1.0 - tc * tc);
    const double db_o = tc * o * (1.0 - o);
    const double db_f = dc * c0 * f * (1.0 - f);
    const double db_i = dc * gc * i * (1.0 - i);
    const double db_c = dc * i * (1.0 - gc * gc);

    EXPECT_NEAR(g.params.output_gate_b[0], db_o, 1e-14);
    EXPECT_NEAR(g.params.forget_b[0], db_f, 1e-14);
    EXPECT_NEAR(g.params.input_gate_b[0], db_i, 1e-14);
    EXPECT_NEAR(g.params.candidate_b[0], db_c, 1e-14);
    EXPECT_NEAR(g.params.forget_w[0], db_f * d0, 1e-14);
    EXPECT_NEAR(g.params.candidate_w[1], db_c * x, 1e-14);
    EXPECT_NEAR(g.inputs[0],
                db_f * p.forget_w[1] + db_i * p.input_gate_w[1] + db_c * p.candidate_w[1] + db_o * p.output_gate_w[1],
                1e-14);
    EXPECT_NEAR(g.initial.cell[0], dc * f, 1e-14);
    EXPECT_NEAR(g.initial.output[0],
                db_f * p.forget_w[0] + db_i * p.input_gate_w[0] + db_c * p.candidate_w[0] + db_o * p.output_gate_w[0],
                1e-14);
  }
}

double sequence_loss(const LstmParams& p, const Tensor& x, const LstmState& init, const Tensor& w) {
  return weighted_sum(lstm_sequence_forward(p, x, init).outputs, w);
}

TEST(LstmBackward, SixStepsMatchFiniteDifferences) {
  Rng rng(17);
  LstmParams p = random_params(rng, 2, 4);
  Tensor x = uniform_tensor(rng, {6, 2});
  LstmState init{uniform_tensor(rng, {4}), uniform_tensor(rng, {4})};
  const Tensor w = uniform_tensor(rng, {6, 4});
  auto g = lstm_backward(p, lstm_sequence_forward(p, x, init).caches, w);
  auto loss = [&] { return sequence_loss(p, x, init, w); };
  const auto analytic = param_list(g.params);
  const auto params = param_list(p);
  for (std::size_t k = 0; k < params.size(); ++k) {
    EXPECT_LT(max_rel_error(*analytic[k], numeric_gradient(loss, *params[k])), 1e-5) << k;
  }
  EXPECT_LT(max_rel_error(g.inputs, numeric_gradient(loss, x)), 1e-5);
  EXPECT_LT(max_rel_error(g.initial.cell, numeric_gradient(loss, init.cell)), 1e-5);
  EXPECT_LT(max_rel_error(g.initial.output, numeric_gradient(loss, init.output)), 1e-5);
}

TEST(LstmBackward, FinalStepLossOverTwentyInstances) {
  Rng rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t t_len = 2 + rng.below(10), hidden = 1 + rng.below(5);
    LstmParams p = random_params(rng, 1, hidden);
    const Tensor x = uniform_tensor(rng, {t_len, 1});
    Tensor w({t_len, hidden});
    for (std::size_t r = 0; r < hidden; ++r) w[(t_len - 1) * hidden + r] = 2.0 * rng.uniform() - 1.0;
    auto g = lstm_backward(p, lstm_sequence_forward(p, x, LstmState::zeros(hidden)).caches, w);
    auto loss = [&] { return sequence_loss(p, x, LstmState::zeros(hidden), w); };
    const auto analytic = param_list(g.params);
    const auto params = param_list(p);
    for (std::size_t k = 0; k < params.size(); ++k) {
      EXPECT_LT(max_rel_error(*analytic[k], numeric_gradient(loss, *params[k])), 1e-4) << trial << " " << k;
    }
  }
}

}  // namespace
}  // namespace nilm
