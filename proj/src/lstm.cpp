// SPDX-License-Identifier: Apache-2.0
#include "nilm/lstm.hpp"

#include <cmath>
#include <string>

#include "nilm/layers.hpp"

namespace nilm {

namespace {

void check_params(const LstmParams& p) {
  const Shape w = p.forget_w.shape();
  if (w.size() != 2 || w[1] <= w[0]) {
    throw DimensionError("lstm: weight shape " + shape_to_string(w) + " is not hidden x (hidden + input)");
  }
  const Shape b{w[0]};
  for (const Tensor* t : {&p.input_gate_w, &p.candidate_w, &p.output_gate_w}) {
    if (t->shape() != w) throw DimensionError("lstm: gate weights disagree: " + shape_to_string(t->shape()));
  }
  for (const Tensor* t : {&p.forget_b, &p.input_gate_b, &p.candidate_b, &p.output_gate_b}) {
    if (t->shape() != b) throw DimensionError("lstm: gate bias " + shape_to_string(t->shape()) + " expected " +
                                              shape_to_string(b));
  }
}

// z = W c + b, one row at a time.
void affine(const Tensor& w, const Tensor& b, std::span<const double> c, std::vector<double>& z) {
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  const auto wv = w.values();
  z.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) z[i] = dot(wv.subspan(i * cols, cols), c) + b[i];
}

}  // namespace

LstmParams make_lstm_params(std::size_t input, std::size_t hidden, Rng& rng) {
  if (input == 0 || hidden == 0) throw ConfigError("lstm extents must be positive");
  const Shape w{hidden, hidden + input};
  const double sd = std::sqrt(2.0 / static_cast<double>(hidden + input));
  LstmParams p;
  p.forget_w = sample_normal(rng, w, 0.0, sd);
  p.forget_b = Tensor::zeros({hidden});
  p.input_gate_w = sample_normal(rng, w, 0.0, sd);
  p.input_gate_b = Tensor::zeros({hidden});
  p.candidate_w = sample_normal(rng, w, 0.0, sd);
  p.candidate_b = Tensor::zeros({hidden});
  p.output_gate_w = sample_normal(rng, w, 0.0, sd);
  p.output_gate_b = Tensor::zeros({hidden});
  return p;
}

LstmParams zero_lstm_params(std::size_t input, std::size_t hidden) {
  const Shape w{hidden, hidden + input};
  const Shape b{hidden};
  return {Tensor(w), Tensor(b), Tensor(w), Tensor(b), Tensor(w), Tensor(b), Tensor(w), Tensor(b)};
}

LstmState LstmState::zeros(std::size_t hidden) { return {Tensor({hidden}), Tensor({hidden})}; }

LstmStep lstm_cell_forward(const LstmParams& p, const LstmState& prev, const Tensor& x) {
  check_params(p);
  const std::size_t hidden = p.hidden(), input = p.input();
  if (prev.cell.size() != hidden || prev.output.size() != hidden) {
    throw DimensionError("lstm_cell_forward: state width does not match hidden size " + std::to_string(hidden));
  }
  if (x.size() != input) {
    throw DimensionError("lstm_cell_forward: input " + shape_to_string(x.shape()) + " expected width " +
                         std::to_string(input));
  }
  std::vector<double> concat(hidden + input);
  std::copy(prev.output.values().begin(), prev.output.values().end(), concat.begin());
  std::copy(x.values().begin(), x.values().end(), concat.begin() + static_cast<std::ptrdiff_t>(hidden));

  std::vector<double> f, i, g, o;
  affine(p.forget_w, p.forget_b, concat, f);
  affine(p.input_gate_w, p.input_gate_b, concat, i);
  affine(p.candidate_w, p.candidate_b, concat, g);
  affine(p.output_gate_w, p.output_gate_b, concat, o);

  std::vector<double> c(hidden), ct(hidden), d(hidden);
  for (std::size_t k = 0; k < hidden; ++k) {
    f[k] = sigmoid(f[k]);
    i[k] = sigmoid(i[k]);
    g[k] = std::tanh(g[k]);
    o[k] = sigmoid(o[k]);
    c[k] = f[k] * prev.cell[k] + i[k] * g[k];
    ct[k] = std::tanh(c[k]);
    d[k] = o[k] * ct[k];
  }

  const Shape hs{hidden};
  LstmStep step;
  step.cache.concat = Tensor({hidden + input}, std::move(concat));
  step.cache.prev_cell = prev.cell;
  step.cache.forget = Tensor(hs, std::move(f));
  step.cache.input_gate = Tensor(hs, std::move(i));
  step.cache.candidate = Tensor(hs, std::move(g));
  step.cache.output_gate = Tensor(hs, std::move(o));
  step.cache.cell = Tensor(hs, std::move(c));
  step.cache.cell_tanh = Tensor(hs, std::move(ct));
  step.cache.output = Tensor(hs, std::move(d));
  step.next = {step.cache.cell, step.cache.output};
  return step;
}

LstmSequence lstm_sequence_forward(const LstmParams& p, const Tensor& x_seq, const LstmState& init) {
  check_params(p);
  if (x_seq.empty() || x_seq.rank() != 2) {
    throw ArgumentError("lstm_sequence_forward: need a non-empty T x input sequence");
  }
  const std::size_t steps = x_seq.dim(0), input = x_seq.dim(1), hidden = p.hidden();
  if (input != p.input()) {
    throw DimensionError("lstm_sequence_forward: sequence " + shape_to_string(x_seq.shape()) +
                         " has input width " + std::to_string(input) + ", cell expects " +
                         std::to_string(p.input()));
  }
  LstmSequence seq;
  seq.caches.reserve(steps);
  std::vector<double> outputs(steps * hidden);
  LstmState state = init;
  const auto xv = x_seq.values();
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor x({input}, std::vector<double>(xv.begin() + static_cast<std::ptrdiff_t>(t * input),
                                          xv.begin() + static_cast<std::ptrdiff_t>((t + 1) * input)));
    LstmStep step = lstm_cell_forward(p, state, x);
    std::copy(step.next.output.values().begin(), step.next.output.values().end(),
              outputs.begin() + static_cast<std::ptrdiff_t>(t * hidden));
    state = std::move(step.next);
    seq.caches.push_back(std::move(step.cache));
  }
  seq.outputs = Tensor({steps, hidden}, std::move(outputs));
  seq.final_state = std::move(state);
  return seq;
}

LstmGradients lstm_backward(const LstmParams& p, const std::vector<LstmStepCache>& caches,
                            const Tensor& grad_outputs) {
  check_params(p);
  const std::size_t hidden = p.hidden(), input = p.input(), width = hidden + input;
  const std::size_t steps = caches.size();
  if (steps == 0 || grad_outputs.rank() != 2 || grad_outputs.dim(0) != steps || grad_outputs.dim(1) != hidden) {
    throw DimensionError("lstm_backward: gradient " + shape_to_string(grad_outputs.shape()) + " does not match " +
                         std::to_string(steps) + " cached steps of width " + std::to_string(hidden));
  }

  std::vector<double> dwf(hidden * width, 0.0), dwi(hidden * width, 0.0), dwg(hidden * width, 0.0),
      dwo(hidden * width, 0.0);
  std::vector<double> dbf(hidden, 0.0), dbi(hidden, 0.0), dbg(hidden, 0.0), dbo(hidden, 0.0);
  std::vector<double> dx(steps * input, 0.0);
  std::vector<double> d_next_output(hidden, 0.0), d_next_cell(hidden, 0.0);
  std::vector<double> zf(hidden), zi(hidden), zg(hidden), zo(hidden), dconcat(width);

  const auto wf = p.forget_w.values(), wi = p.input_gate_w.values(), wg = p.candidate_w.values(),
             wo = p.output_gate_w.values();
  const auto gout = grad_outputs.values();

  for (std::size_t t = steps; t-- > 0;) {
    const LstmStepCache& c = caches[t];
    if (c.concat.size() != width) throw DimensionError("lstm_backward: cache width mismatch at step " + std::to_string(t));
    for (std::size_t k = 0; k < hidden; ++k) {
      const double dd = gout[t * hidden + k] + d_next_output[k];
      const double o = c.output_gate[k], ct = c.cell_tanh[k];
      const double dc = dd * o * (1.0 - ct * ct) + d_next_cell[k];
      const double f = c.forget[k], i = c.input_gate[k], g = c.candidate[k];
      zo[k] = dd * ct * o * (1.0 - o);
      zf[k] = dc * c.prev_cell[k] * f * (1.0 - f);
      zi[k] = dc * g * i * (1.0 - i);
      zg[k] = dc * i * (1.0 - g * g);
      d_next_cell[k] = dc * f;
    }
    std::fill(dconcat.begin(), dconcat.end(), 0.0);
    const auto cv = c.concat.values();
    for (std::size_t k = 0; k < hidden; ++k) {
      const std::size_t row = k * width;
      for (std::size_t j = 0; j < width; ++j) {
        dwf[row + j] += zf[k] * cv[j];
        dwi[row + j] += zi[k] * cv[j];
        dwg[row + j] += zg[k] * cv[j];
        dwo[row + j] += zo[k] * cv[j];
        dconcat[j] += wf[row + j] * zf[k] + wi[row + j] * zi[k] + wg[row + j] * zg[k] + wo[row + j] * zo[k];
      }
      dbf[k] += zf[k];
      dbi[k] += zi[k];
      dbg[k] += zg[k];
      dbo[k] += zo[k];
    }
    std::copy(dconcat.begin(), dconcat.begin() + static_cast<std::ptrdiff_t>(hidden), d_next_output.begin());
    std::copy(dconcat.begin() + static_cast<std::ptrdiff_t>(hidden), dconcat.end(),
              dx.begin() + static_cast<std::ptrdiff_t>(t * input));
  }

  const Shape ws{hidden, width}, bs{hidden};
  LstmGradients grads;
  grads.params = {Tensor(ws, std::move(dwf)), Tensor(bs, std::move(dbf)), Tensor(ws, std::move(dwi)),
                  Tensor(bs, std::move(dbi)), Tensor(ws, std::move(dwg)), Tensor(bs, std::move(dbg)),
                  Tensor(ws, std::move(dwo)), Tensor(bs, std::move(dbo))};
  grads.inputs = Tensor({steps, input}, std::move(dx));
  grads.initial = {Tensor(bs, std::move(d_next_cell)), Tensor(bs, std::move(d_next_output))};
  return grads;
}

}  // namespace nilm
