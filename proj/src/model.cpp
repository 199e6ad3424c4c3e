// SPDX-License-Identifier: Apache-2.0
#include "nilm/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "nilm/text.hpp"

namespace nilm {

const char* to_string(OutputMode mode) {
  return mode == OutputMode::SoftmaxExclusive ? "exclusive" : "multilabel";
}

const char* to_string(Architecture arch) {
  switch (arch) {
    case Architecture::Hybrid: return "hybrid";
    case Architecture::CnnOnly: return "cnn";
    case Architecture::LstmOnly: return "lstm";
  }
  return "?";
}

OutputMode parse_output_mode(const std::string& text) {
  if (text == "exclusive") return OutputMode::SoftmaxExclusive;
  if (text == "multilabel") return OutputMode::SigmoidMultiLabel;
  throw ConfigError("unknown output mode '" + text + "' (expected exclusive or multilabel)");
}

Architecture parse_architecture(const std::string& text) {
  if (text == "hybrid") return Architecture::Hybrid;
  if (text == "cnn") return Architecture::CnnOnly;
  if (text == "lstm") return Architecture::LstmOnly;
  throw ConfigError("unknown architecture '" + text + "' (expected cnn, lstm or hybrid)");
}

std::size_t ModelConfig::image_side() const {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(window_len))));
  return side * side == window_len ? side : 0;
}

void ModelConfig::validate() const {
  if (window_len == 0 || image_side() == 0) {
    throw ConfigError("window_len " + std::to_string(window_len) + " is not a positive perfect square");
  }
  const std::pair<const char*, std::size_t> extents[] = {
      {"appliance_count", appliance_count}, {"conv1_kernels", conv1_kernels}, {"conv2_kernels", conv2_kernels},
      {"kernel_size", kernel_size},         {"stride", stride},               {"lstm_hidden", lstm_hidden},
      {"map_dim", map_dim},                 {"batch_size", batch_size}};
  for (const auto& [name, value] : extents) {
    if (value == 0) throw ConfigError(std::string(name) + " must be positive");
  }
  if (!(leaky_alpha > 0.0 && leaky_alpha < 1.0)) throw ConfigError("leaky_alpha must lie in (0, 1)");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (uses_cnn()) {
    try {
      (void)cnn_shapes(*this);
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("CNN branch does not fit the window: ") + e.what());
    }
  }
}

CnnShapes cnn_shapes(const ModelConfig& config) {
  CnnShapes s{};
  s.image = config.image_side();
  const int f = static_cast<int>(config.kernel_size), p = static_cast<int>(config.padding),
            st = static_cast<int>(config.stride);
  s.conv1 = static_cast<std::size_t>(conv_output_size(static_cast<int>(s.image), f, p, st));
  s.pool1 = pool_output_size(s.conv1, 2, 2);
  s.conv2 = static_cast<std::size_t>(conv_output_size(static_cast<int>(s.pool1), f, p, st));
  s.pool2 = pool_output_size(s.conv2, 2, 2);
  s.flattened = config.conv2_kernels * s.pool2 * s.pool2;
  return s;
}

std::string format_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "window_len = " << c.window_len << '\n'
      << "appliance_count = " << c.appliance_count << '\n'
      << "conv1_kernels = " << c.conv1_kernels << '\n'
      << "conv2_kernels = " << c.conv2_kernels << '\n'
      << "kernel_size = " << c.kernel_size << '\n'
      << "stride = " << c.stride << '\n'
      << "padding = " << c.padding << '\n'
      << "lstm_hidden = " << c.lstm_hidden << '\n'
      << "map_dim = " << c.map_dim << '\n'
      << "leaky_alpha = " << format_double(c.leaky_alpha) << '\n'
      << "learning_rate = " << format_double(c.learning_rate) << '\n'
      << "epochs = " << c.epochs << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "clip_norm = " << format_double(c.clip_norm) << '\n'
      << "target_train_accuracy = "
      << (c.target_train_accuracy ? format_double(*c.target_train_accuracy) : std::string("none")) << '\n'
      << "output_mode = " << to_string(c.output_mode) << '\n'
      << "arch = " << to_string(c.arch) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

namespace {

std::size_t config_size(const std::string& key, const std::string& value) {
  const auto v = parse_uint(value);
  if (!v) throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(*v);
}

double config_real(const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v) throw ConfigError(key + ": expected a number, got '" + value + "'");
  return *v;
}

}  // namespace

void apply_config_entry(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "window_len") c.window_len = config_size(key, value);
  else if (key == "appliance_count") c.appliance_count = config_size(key, value);
  else if (key == "conv1_kernels") c.conv1_kernels = config_size(key, value);
  else if (key == "conv2_kernels") c.conv2_kernels = config_size(key, value);
  else if (key == "kernel_size") c.kernel_size = config_size(key, value);
  else if (key == "stride") c.stride = config_size(key, value);
  else if (key == "padding") c.padding = config_size(key, value);
  else if (key == "lstm_hidden") c.lstm_hidden = config_size(key, value);
  else if (key == "map_dim") c.map_dim = config_size(key, value);
  else if (key == "leaky_alpha") c.leaky_alpha = config_real(key, value);
  else if (key == "learning_rate") c.learning_rate = config_real(key, value);
  else if (key == "epochs") c.epochs = static_cast<int>(config_size(key, value));
  else if (key == "batch_size") c.batch_size = config_size(key, value);
  else if (key == "clip_norm") c.clip_norm = config_real(key, value);
  else if (key == "target_train_accuracy") {
    if (value == "none") c.target_train_accuracy.reset();
    else c.target_train_accuracy = config_real(key, value);
  } else if (key == "output_mode") c.output_mode = parse_output_mode(value);
  else if (key == "arch") c.arch = parse_architecture(value);
  else if (key == "seed") c.seed = config_size(key, value);
  else throw ConfigError("unknown model config key '" + key + "'");
}

ModelConfig parse_config(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    apply_config_entry(c, std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return c;
}

// ---------------------------------------------------------------------------

std::vector<NamedTensor> HybridParams::tensors() {
  std::vector<NamedTensor> out;
  if (cnn) {
    out.push_back({"cnn.conv1.kernels", &cnn->conv1.kernels});
    out.push_back({"cnn.conv1.bias", &cnn->conv1.bias});
    out.push_back({"cnn.conv2.kernels", &cnn->conv2.kernels});
    out.push_back({"cnn.conv2.bias", &cnn->conv2.bias});
    out.push_back({"cnn.map.weights", &cnn->map.weights});
    out.push_back({"cnn.map.bias", &cnn->map.bias});
  }
  if (lstm) {
    out.push_back({"lstm.forget.weights", &lstm->cell.forget_w});
    out.push_back({"lstm.forget.bias", &lstm->cell.forget_b});
    out.push_back({"lstm.input_gate.weights", &lstm->cell.input_gate_w});
    out.push_back({"lstm.input_gate.bias", &lstm->cell.input_gate_b});
    out.push_back({"lstm.candidate.weights", &lstm->cell.candidate_w});
    out.push_back({"lstm.candidate.bias", &lstm->cell.candidate_b});
    out.push_back({"lstm.output_gate.weights", &lstm->cell.output_gate_w});
    out.push_back({"lstm.output_gate.bias", &lstm->cell.output_gate_b});
    out.push_back({"lstm.map.weights", &lstm->map.weights});
    out.push_back({"lstm.map.bias", &lstm->map.bias});
  }
  out.push_back({"head.weights", &head.weights});
  out.push_back({"head.bias", &head.bias});
  return out;
}

std::vector<ConstNamedTensor> HybridParams::tensors() const {
  std::vector<ConstNamedTensor> out;
  for (auto& t : const_cast<HybridParams*>(this)->tensors()) out.push_back({std::move(t.name), t.tensor});
  return out;
}

std::size_t HybridParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.tensor->size();
  return n;
}

bool operator==(const CnnBranch& a, const CnnBranch& b) {
  return a.conv1.kernels == b.conv1.kernels && a.conv1.bias == b.conv1.bias && a.conv2.kernels == b.conv2.kernels &&
         a.conv2.bias == b.conv2.bias && a.map.weights == b.map.weights && a.map.bias == b.map.bias;
}

bool operator==(const LstmBranch& a, const LstmBranch& b) {
  const auto& x = a.cell;
  const auto& y = b.cell;
  return x.forget_w == y.forget_w && x.forget_b == y.forget_b && x.input_gate_w == y.input_gate_w &&
         x.input_gate_b == y.input_gate_b && x.candidate_w == y.candidate_w && x.candidate_b == y.candidate_b &&
         x.output_gate_w == y.output_gate_w && x.output_gate_b == y.output_gate_b && a.map.weights == b.map.weights &&
         a.map.bias == b.map.bias;
}

bool operator==(const HybridParams& a, const HybridParams& b) {
  return a.config == b.config && a.cnn == b.cnn && a.lstm == b.lstm && a.head.weights == b.head.weights &&
         a.head.bias == b.head.bias;
}

HybridParams build_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  const auto leaky = Activation::leaky_relu(config.leaky_alpha);
  HybridParams p;
  p.config = config;
  std::size_t head_in = 0;
  if (config.uses_cnn()) {
    const auto shapes = cnn_shapes(config);
    CnnBranch cnn;
    cnn.conv1 = make_conv_layer(1, config.conv1_kernels, config.kernel_size, config.stride, config.padding, leaky, rng);
    cnn.conv2 = make_conv_layer(config.conv1_kernels, config.conv2_kernels, config.kernel_size, config.stride,
                                config.padding, leaky, rng);
    cnn.map = make_dense_layer(shapes.flattened, config.map_dim, leaky, rng);
    p.cnn = std::move(cnn);
    head_in += config.map_dim;
  }
  if (config.uses_lstm()) {
    LstmBranch lstm;
    lstm.cell = make_lstm_params(1, config.lstm_hidden, rng);
    lstm.map = make_dense_layer(config.lstm_hidden, config.map_dim, leaky, rng);
    p.lstm = std::move(lstm);
    head_in += config.map_dim;
  }
  p.head = make_dense_layer(head_in, config.appliance_count, Activation::identity(), rng);
  return p;
}

HybridParams zero_model(const ModelConfig& config) {
  Rng rng(0);
  HybridParams p = build_model(config, rng);
  for (auto& t : p.tensors()) std::fill(t.tensor->data().begin(), t.tensor->data().end(), 0.0);
  return p;
}

HybridParams zeros_like(const HybridParams& params) {
  HybridParams z = params;
  for (auto& t : z.tensors()) std::fill(t.tensor->data().begin(), t.tensor->data().end(), 0.0);
  return z;
}

void accumulate(HybridParams& into, const HybridParams& g) {
  auto dst = into.tensors();
  const auto src = g.tensors();
  if (dst.size() != src.size()) throw DimensionError("accumulate: parameter layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    require_same_shape(*dst[i].tensor, *src[i].tensor, "accumulate");
    auto d = dst[i].tensor->data();
    const auto s = src[i].tensor->values();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
  }
}

void scale_in_place(HybridParams& params, double factor) {
  for (auto& t : params.tensors()) {
    for (auto& v : t.tensor->data()) v *= factor;
  }
}

double global_norm(const HybridParams& params) {
  double sq = 0.0;
  for (const auto& t : params.tensors()) sq += dot(t.tensor->values(), t.tensor->values());
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------

Tensor output_activation(OutputMode mode, const Tensor& logits) {
  return apply_activation(mode == OutputMode::SoftmaxExclusive ? Activation::softmax() : Activation::sigmoid(),
                          logits);
}

HybridForward hybrid_forward(const HybridParams& p, const Tensor& window) {
  const ModelConfig& cfg = p.config;
  if (window.rank() != 1 || window.size() != cfg.window_len) {
    throw DimensionError("hybrid_forward: window " + shape_to_string(window.shape()) + " expected length " +
                         std::to_string(cfg.window_len));
  }
  HybridCache cache;
  std::vector<double> features;
  if (p.cnn) {
    const std::size_t side = cfg.image_side();
    CnnCache c;
    auto conv1 = conv2d_forward(p.cnn->conv1, window.reshaped({1, side, side}));
    auto pool1 = maxpool2d(conv1.output);
    auto conv2 = conv2d_forward(p.cnn->conv2, pool1.output);
    auto pool2 = maxpool2d(conv2.output);
    auto mapped = dense_forward(p.cnn->map, pool2.output.reshaped({pool2.output.size()}));
    features.insert(features.end(), mapped.output.values().begin(), mapped.output.values().end());
    c.conv1 = std::move(conv1.cache);
    c.pool1 = std::move(pool1.cache);
    c.conv2 = std::move(conv2.cache);
    c.pool2 = std::move(pool2.cache);
    c.map = std::move(mapped.cache);
    cache.cnn = std::move(c);
  }
  if (p.lstm) {
    auto seq = lstm_sequence_forward(p.lstm->cell, window.reshaped({cfg.window_len, 1}),
                                     LstmState::zeros(p.lstm->cell.hidden()));
    auto mapped = dense_forward(p.lstm->map, seq.final_state.output);
    features.insert(features.end(), mapped.output.values().begin(), mapped.output.values().end());
    cache.lstm = LstmBranchCache{std::move(seq.caches), std::move(mapped.cache)};
  }
  const std::size_t width = features.size();
  auto head = dense_forward(p.head, Tensor({width}, std::move(features)));
  cache.head = std::move(head.cache);
  cache.logits = head.output;
  cache.scores = output_activation(cfg.output_mode, cache.logits);
  Tensor scores = cache.scores;
  return {std::move(scores), std::move(cache)};
}

HybridParams hybrid_backward_logits(const HybridParams& p, const HybridCache& cache, const Tensor& grad_logits) {
  if (grad_logits.shape() != cache.logits.shape()) {
    throw DimensionError("hybrid_backward: gradient " + shape_to_string(grad_logits.shape()) +
                         " does not match scores " + shape_to_string(cache.logits.shape()));
  }
  HybridParams g = zeros_like(p);
  auto head = dense_backward(p.head, cache.head, grad_logits);
  g.head.weights = std::move(head.weights);
  g.head.bias = std::move(head.bias);

  const auto features = head.input.values();
  std::size_t offset = 0;
  auto slice = [&](std::size_t n) {
    Tensor t({n}, std::vector<double>(features.begin() + static_cast<std::ptrdiff_t>(offset),
                                      features.begin() + static_cast<std::ptrdiff_t>(offset + n)));
    offset += n;
    return t;
  };

  if (p.cnn) {
    const CnnCache& c = *cache.cnn;
    auto map = dense_backward(p.cnn->map, c.map, slice(p.cnn->map.out_features()));
    // The flattened features are the pooled map in row-major order, so the
    // flat gradient lines up with the pool's per-output argmax table.
    auto conv2 = conv2d_backward(p.cnn->conv2, c.conv2, maxpool2d_backward(c.pool2, map.input));
    auto conv1 = conv2d_backward(p.cnn->conv1, c.conv1, maxpool2d_backward(c.pool1, conv2.input));
    g.cnn->conv1.kernels = std::move(conv1.kernels);
    g.cnn->conv1.bias = std::move(conv1.bias);
    g.cnn->conv2.kernels = std::move(conv2.kernels);
    g.cnn->conv2.bias = std::move(conv2.bias);
    g.cnn->map.weights = std::move(map.weights);
    g.cnn->map.bias = std::move(map.bias);
  }
  if (p.lstm) {
    const LstmBranchCache& c = *cache.lstm;
    auto map = dense_backward(p.lstm->map, c.map, slice(p.lstm->map.out_features()));
    const std::size_t steps = c.steps.size(), hidden = p.lstm->cell.hidden();
    Tensor grad_outputs({steps, hidden});
    auto go = grad_outputs.data();
    for (std::size_t k = 0; k < hidden; ++k) go[(steps - 1) * hidden + k] = map.input[k];
    auto cell = lstm_backward(p.lstm->cell, c.steps, grad_outputs);
    g.lstm->cell = std::move(cell.params);
    g.lstm->map.weights = std::move(map.weights);
    g.lstm->map.bias = std::move(map.bias);
  }
  return g;
}

HybridParams hybrid_backward(const HybridParams& p, const HybridCache& cache, const Tensor& grad_scores) {
  const Activation act = p.config.output_mode == OutputMode::SoftmaxExclusive ? Activation::softmax()
                                                                               : Activation::sigmoid();
  if (grad_scores.shape() != cache.scores.shape()) {
    throw DimensionError("hybrid_backward: gradient " + shape_to_string(grad_scores.shape()) +
                         " does not match scores " + shape_to_string(cache.scores.shape()));
  }
  return hybrid_backward_logits(p, cache, activation_backward(act, cache.logits, cache.scores, grad_scores));
}

Tensor states_from_scores(OutputMode mode, const Tensor& scores) {
  Tensor states(scores.shape());
  auto s = states.data();
  if (mode == OutputMode::SoftmaxExclusive) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
      if (scores[k] > scores[best]) best = k;
    }
    s[best] = 1.0;
  } else {
    for (std::size_t k = 0; k < scores.size(); ++k) s[k] = scores[k] > 0.5 ? 1.0 : 0.0;
  }
  return states;
}

Tensor predict_states(const HybridParams& p, const Tensor& window) {
  return states_from_scores(p.config.output_mode, hybrid_forward(p, window).scores);
}

double kink_margin(const HybridCache& cache) {
  double margin = std::numeric_limits<double>::infinity();
  auto visit = [&](const Tensor& pre) {
    for (double v : pre.values()) margin = std::min(margin, std::abs(v));
  };
  if (cache.cnn) {
    visit(cache.cnn->conv1.pre_activation);
    visit(cache.cnn->conv2.pre_activation);
    visit(cache.cnn->map.pre_activation);
    margin = std::min(margin, pool_margin(cache.cnn->conv1.output));
    margin = std::min(margin, pool_margin(cache.cnn->conv2.output));
  }
  if (cache.lstm) visit(cache.lstm->map.pre_activation);
  return margin;
}

}  // namespace nilm
