// SPDX-License-Identifier: Apache-2.0
#include "nilm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nilm/layers.hpp"
#include "nilm/text.hpp"

namespace nilm {

void validate_label(OutputMode mode, const Tensor& label) {
  double ones = 0.0;
  for (double v : label.values()) {
    if (v != 0.0 && v != 1.0) throw ArgumentError("label entries must be 0 or 1");
    ones += v;
  }
  if (mode == OutputMode::SoftmaxExclusive && ones != 1.0) {
    throw ArgumentError("exclusive mode needs a one-hot label, got " + std::to_string(static_cast<int>(ones)) +
                        " active states");
  }
}

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

LossResult loss_with_logits(OutputMode mode, const Tensor& logits, const Tensor& label) {
  require_same_shape(logits, label, "loss");
  validate_label(mode, label);
  const std::size_t k_count = logits.size();
  std::vector<double> grad(k_count);
  double value = 0.0;
  if (mode == OutputMode::SoftmaxExclusive) {
    const double peak = *std::max_element(logits.values().begin(), logits.values().end());
    double total = 0.0;
    for (double z : logits.values()) total += std::exp(z - peak);
    const double log_norm = peak + std::log(total);
    for (std::size_t k = 0; k < k_count; ++k) {
      value -= label[k] * (logits[k] - log_norm);
      grad[k] = std::exp(logits[k] - log_norm) - label[k];
    }
  } else {
    const double inv_k = 1.0 / static_cast<double>(k_count);
    for (std::size_t k = 0; k < k_count; ++k) {
      value += (softplus(logits[k]) - label[k] * logits[k]) * inv_k;
      grad[k] = (sigmoid(logits[k]) - label[k]) * inv_k;
    }
  }
  return {value, Tensor(logits.shape(), std::move(grad))};
}

double loss_from_scores(OutputMode mode, const Tensor& scores, const Tensor& label) {
  require_same_shape(scores, label, "loss");
  validate_label(mode, label);
  double value = 0.0;
  if (mode == OutputMode::SoftmaxExclusive) {
    for (std::size_t k = 0; k < scores.size(); ++k) {
      if (label[k] == 1.0) value -= std::log(scores[k]);
    }
    return value;
  }
  for (std::size_t k = 0; k < scores.size(); ++k) {
    value -= label[k] == 1.0 ? std::log(scores[k]) : std::log1p(-scores[k]);
  }
  return value / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------

AdamState make_adam(const std::vector<Shape>& shapes, double learning_rate) {
  if (!(learning_rate >= 0.0)) throw ArgumentError("learning rate must be non-negative");
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& shape : shapes) {
    s.m.emplace_back(shape);
    s.v.emplace_back(shape);
  }
  return s;
}

AdamState make_adam(const HybridParams& params, double learning_rate) {
  std::vector<Shape> shapes;
  for (const auto& t : params.tensors()) shapes.push_back(t.tensor->shape());
  return make_adam(shapes, learning_rate);
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                         std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) +
                         " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], *grads[i], "adam_step");
    require_same_shape(*params[i], state.m[i], "adam_step");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->data();
    const auto g = grads[i]->values();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      theta[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

void adam_step(AdamState& state, HybridParams& params, const HybridParams& grads) {
  std::vector<Tensor*> p;
  std::vector<const Tensor*> g;
  for (auto& t : params.tensors()) p.push_back(t.tensor);
  for (const auto& t : grads.tensors()) g.push_back(t.tensor);
  adam_step(state, p, g);
}

double clip_global_norm(HybridParams& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) scale_in_place(grads, max_norm / norm);
  return norm;
}

// ---------------------------------------------------------------------------

std::string TrainHistory::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,test_acc,seconds\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.train_accuracy) + "," +
           format_double(e.test_accuracy) + "," + format_fixed(e.seconds, 3) + "\n";
  }
  return out;
}

namespace {

bool states_match(const Tensor& predicted, const Tensor& label) { return predicted == label; }

constexpr std::uint64_t kShuffleStream = 0x53485546464c45ULL;  // "SHUFFLE"

void check_dataset(const ModelConfig& config, const WindowDataset& data, const char* which) {
  if (data.size() == 0) throw ArgumentError(std::string("fit: ") + which + " dataset is empty");
  if (data.appliance_count() != config.appliance_count || data.window_len() != config.window_len) {
    throw ArgumentError(std::string("fit: ") + which + " dataset has K=" + std::to_string(data.appliance_count()) +
                        ", L=" + std::to_string(data.window_len()) + " but the model expects K=" +
                        std::to_string(config.appliance_count) + ", L=" + std::to_string(config.window_len));
  }
}

}  // namespace

double exact_match_accuracy(const HybridParams& params, const WindowDataset& data) {
  if (data.size() == 0) throw ArgumentError("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += states_match(predict_states(params, data.window(i)), data.label(i));
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

FitResult fit(const ModelConfig& config, HybridParams params, const WindowDataset& train, const WindowDataset& test) {
  config.validate();
  check_dataset(config, train, "train");
  check_dataset(config, test, "test");
  if (params.config.appliance_count != config.appliance_count || params.config.window_len != config.window_len) {
    throw ArgumentError("fit: parameters were built for a different window length or appliance count");
  }
  for (std::size_t i = 0; i < train.size(); ++i) validate_label(config.output_mode, train.label(i));

  FitResult result;
  AdamState adam = make_adam(params, config.learning_rate);
  Rng shuffle_rng = Rng::split(config.seed, kShuffleStream);
  std::vector<std::size_t> order(train.size());
  const std::size_t batch = config.batch_size;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t hits = 0;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++batch_index) {
      const std::size_t end = std::min(begin + batch, order.size());
      try {
        HybridParams grads = zeros_like(params);
        for (std::size_t b = begin; b < end; ++b) {
          const Tensor label = train.label(order[b]);
          auto fwd = hybrid_forward(params, train.window(order[b]));
          const auto loss = loss_with_logits(config.output_mode, fwd.cache.logits, label);
          if (!std::isfinite(loss.value)) throw DivergenceError(epoch, batch_index, "loss is not finite");
          loss_sum += loss.value;
          hits += states_match(states_from_scores(config.output_mode, fwd.scores), label);
          accumulate(grads, hybrid_backward_logits(params, fwd.cache, loss.grad_logits));
        }
        scale_in_place(grads, 1.0 / static_cast<double>(end - begin));
        clip_global_norm(grads, config.clip_norm);
        adam_step(adam, params, grads);
        for (const auto& t : params.tensors()) {
          if (!t.tensor->all_finite()) throw DivergenceError(epoch, batch_index, t.name + " is not finite");
        }
      } catch (const NonFiniteError& e) {
        throw DivergenceError(epoch, batch_index, e.what());
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    record.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    record.test_accuracy = exact_match_accuracy(params, test);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(record);

    if (config.target_train_accuracy && record.train_accuracy >= *config.target_train_accuracy) {
      result.history.stopped_early = true;
      break;
    }
  }
  result.params = std::move(params);
  return result;
}

// ---------------------------------------------------------------------------

bool GradCheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const TensorCheck& t) { return t.passed; });
}

double GradCheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
  return m;
}

std::string GradCheckReport::describe() const {
  std::ostringstream out;
  for (const auto& t : tensors) {
    out << (t.passed ? "ok   " : "FAIL ") << t.name << " coords=" << t.coords_checked
        << " max_rel=" << t.max_rel_error;
    if (!t.passed) {
      out << " at [" << t.worst_index << "] analytic=" << t.worst_analytic << " numeric=" << t.worst_numeric;
    }
    out << '\n';
  }
  return out.str();
}

GradCheckReport gradient_check(const std::function<double()>& loss, const std::vector<NamedTensor>& params,
                               const std::vector<const Tensor*>& analytic, const GradCheckOptions& options) {
  if (params.size() != analytic.size()) throw DimensionError("gradient_check: parameter and gradient counts differ");
  GradCheckReport report;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i].tensor;
    const Tensor& grad = *analytic[i];
    require_same_shape(theta, grad, "gradient_check");

    std::vector<std::size_t> coords(theta.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_coords_per_tensor) {
      rng.shuffle(coords);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }

    TensorCheck check;
    check.name = params[i].name;
    check.coords_checked = coords.size();
    auto values = theta.data();
    for (std::size_t idx : coords) {
      const double saved = values[idx];
      values[idx] = saved + options.step;
      const double up = loss();
      values[idx] = saved - options.step;
      const double down = loss();
      values[idx] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = grad[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > check.max_rel_error || !std::isfinite(rel)) {
        check.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        check.worst_index = idx;
        check.worst_analytic = a;
        check.worst_numeric = numeric;
      }
    }
    check.passed = check.max_rel_error < options.tolerance;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

GradCheckReport gradient_check_model(HybridParams& params, const Tensor& window, const Tensor& label,
                                     const GradCheckOptions& options) {
  const OutputMode mode = params.config.output_mode;
  const auto fwd = hybrid_forward(params, window);
  const HybridParams grads =
      hybrid_backward_logits(params, fwd.cache, loss_with_logits(mode, fwd.cache.logits, label).grad_logits);
  std::vector<const Tensor*> analytic;
  for (const auto& t : grads.tensors()) analytic.push_back(t.tensor);
  auto loss = [&]() { return loss_with_logits(mode, hybrid_forward(params, window).cache.logits, label).value; };
  return gradient_check(loss, params.tensors(), analytic, options);
}

RandomGradCheck gradient_check_random_models(const ModelConfig& config, std::size_t instances, std::uint64_t seed,
                                             const GradCheckOptions& options, double min_margin) {
  config.validate();
  RandomGradCheck out;
  Rng rng(seed);
  const std::size_t k_count = config.appliance_count;
  while (out.instances < instances) {
    HybridParams params = build_model(config, rng);
    for (auto& t : params.tensors()) {
      if (t.tensor->rank() != 1) continue;  // biases start at zero; give them a spread
      for (auto& v : t.tensor->data()) v = rng.normal(0.0, 0.5);
    }
    Tensor window({config.window_len});
    for (auto& v : window.data()) v = rng.uniform();
    Tensor label({k_count});
    if (config.output_mode == OutputMode::SoftmaxExclusive) {
      label[rng.below(k_count)] = 1.0;
    } else {
      for (auto& v : label.data()) v = rng.below(2) ? 1.0 : 0.0;
    }
    if (kink_margin(hybrid_forward(params, window).cache) < min_margin) {
      ++out.resampled;
      continue;
    }
    GradCheckOptions opts = options;
    opts.seed = rng.next_u64();
    const auto report = gradient_check_model(params, window, label, opts);
    ++out.instances;
    out.max_rel_error = std::max(out.max_rel_error, report.max_rel_error());
    if (!report.passed() && out.passed) {
      out.passed = false;
      out.first_failure = "instance " + std::to_string(out.instances) + ": " + report.describe();
    }
  }
  return out;
}

}  // namespace nilm
