// SPDX-License-Identifier: Apache-2.0
#include "nilm/experiments.hpp"

#include <sstream>

#include "nilm/errors.hpp"
#include "nilm/text.hpp"

namespace nilm {

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Synth: return "synth";
    case ExperimentKind::Train: return "train";
    case ExperimentKind::Eval: return "eval";
    case ExperimentKind::SweepLr: return "sweep_lr";
    case ExperimentKind::SweepKernels: return "sweep_kernels";
    case ExperimentKind::Noise: return "noise";
  }
  return "?";
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) {
    const auto v = parse_double(trim(part));
    if (!v) throw ConfigError("expected a number, got '" + std::string(trim(part)) + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

std::vector<KernelPair> parse_kernel_grid(const std::string& text) {
  std::vector<KernelPair> out;
  for (const auto& part : split(text, ',')) {
    const auto item = std::string(trim(part));
    const auto x = item.find('x');
    const auto a = x == std::string::npos ? std::nullopt : parse_uint(item.substr(0, x));
    const auto b = x == std::string::npos ? std::nullopt : parse_uint(item.substr(x + 1));
    if (!a || !b || *a == 0 || *b == 0) throw ConfigError("expected <conv1>x<conv2>, got '" + item + "'");
    out.emplace_back(static_cast<std::size_t>(*a), static_cast<std::size_t>(*b));
  }
  if (out.empty()) throw ConfigError("empty kernel grid");
  return out;
}

std::string format_kernel_pair(const KernelPair& pair) {
  return "(" + std::to_string(pair.first) + "," + std::to_string(pair.second) + ")";
}

namespace {

std::size_t positive_size(const std::string& key, const std::string& value) {
  const auto v = parse_uint(value);
  if (!v || *v == 0) throw ConfigError(key + ": expected a positive integer, got '" + value + "'");
  return static_cast<std::size_t>(*v);
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + fmt(items[i]);
  return out;
}

}  // namespace

bool ExperimentConfig::is_explicit(const std::string& key) const {
  for (const auto& k : explicit_keys) {
    if (k == key) return true;
  }
  return false;
}

void apply_experiment_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
  if (key == "data") c.data = value;
  else if (key == "spec") c.spec = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "out") c.out_dir = value;
  else if (key == "length") c.length = positive_size(key, value);
  else if (key == "train_len") c.train_len = positive_size(key, value);
  else if (key == "test_len") c.test_len = positive_size(key, value);
  else if (key == "threshold") {
    const auto v = parse_double(value);
    if (!v || *v < 0.0) throw ConfigError("threshold: expected a non-negative number, got '" + value + "'");
    c.on_threshold = *v;
  } else if (key == "lr_grid") c.lr_grid = parse_number_list(value);
  else if (key == "kernel_grid") c.kernel_grid = parse_kernel_grid(value);
  else if (key == "snr") c.snr_list = parse_number_list(value);
  else if (key == "train_snr") {
    if (value == "none") c.train_snr.reset();
    else c.train_snr = parse_number_list(value).at(0);
  } else apply_config_entry(c.model, key, value);
  if (!c.is_explicit(key)) c.explicit_keys.push_back(key);
}

void apply_experiment_file(ExperimentConfig& c, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = trim(body.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key = value");
    try {
      apply_experiment_entry(c, std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string format_experiment_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "# command: " << to_string(c.kind) << '\n'
      << format_config(c.model)
      << "data = " << c.data.string() << '\n'
      << "spec = " << c.spec.string() << '\n'
      << "checkpoint = " << c.checkpoint.string() << '\n'
      << "out = " << c.out_dir.string() << '\n'
      << "length = " << c.length << '\n'
      << "train_len = " << c.train_len << '\n'
      << "test_len = " << c.test_len << '\n'
      << "threshold = " << format_double(c.on_threshold) << '\n'
      << "lr_grid = " << join(c.lr_grid, [](double v) { return format_double(v); }) << '\n'
      << "kernel_grid = "
      << join(c.kernel_grid, [](const KernelPair& k) { return std::to_string(k.first) + "x" + std::to_string(k.second); })
      << '\n'
      << "snr = " << join(c.snr_list, [](double v) { return format_double(v); }) << '\n'
      << "train_snr = " << (c.train_snr ? format_double(*c.train_snr) : std::string("none")) << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

LoadedData load_data(const ExperimentConfig& c) {
  if (c.data.empty()) throw ConfigError("no dataset given");
  LoadedData out;
  if (std::filesystem::is_directory(c.data)) {
    const auto archive = read_archive(c.data);
    out.sets = window_and_split(archive.series, archive.labels, c.model.window_len, archive.train_len,
                                archive.test_len);
    out.appliance_names = archive.series.appliance_names;
    out.archive_mode = parse_output_mode(archive.mode);
  } else {
    const auto series = load_csv(c.data);
    const std::vector<double> thresholds(series.appliance_count(), c.on_threshold);
    const auto labels = make_labels(series, thresholds);
    out.sets = window_and_split(series, labels, c.model.window_len, c.train_len, c.test_len);
    out.appliance_names = series.appliance_names;
  }
  if (c.train_snr) {
    Rng rng(noise_seed(c.model.seed) ^ 0x545241494eULL);
    out.sets.train = with_noise(out.sets.train, *c.train_snr, rng);
  }
  return out;
}

TrainRun train_model(const ModelConfig& config, const SplitDatasets& data) {
  config.validate();
  Rng rng(config.seed);
  TrainRun run{build_model(config, rng), {}, {}};
  run.fit = fit(config, run.initial, data.train, data.test);
  run.test_report = evaluate(run.fit.params, data.test);
  return run;
}

namespace {

SweepRow sweep_point(const std::string& point, const ModelConfig& config, const SplitDatasets& data) {
  SweepRow row;
  row.point = point;
  try {
    Rng rng(config.seed);
    const auto result = fit(config, build_model(config, rng), data.train, data.test);
    row.train_accuracy = exact_match_accuracy(result.params, data.train);
    row.test_accuracy = exact_match_accuracy(result.params, data.test);
  } catch (const DivergenceError& e) {
    row.diverged = true;
    row.detail = e.what();
  }
  return row;
}

}  // namespace

std::vector<SweepRow> sweep_learning_rate(const ModelConfig& base, const SplitDatasets& data,
                                          const std::vector<double>& grid) {
  if (grid.empty()) throw ArgumentError("learning-rate grid is empty");
  std::vector<SweepRow> rows;
  for (double lr : grid) {
    ModelConfig c = base;
    c.learning_rate = lr;
    c.validate();
    rows.push_back(sweep_point(format_double(lr), c, data));
  }
  return rows;
}

std::vector<SweepRow> sweep_kernels(const ModelConfig& base, const SplitDatasets& data,
                                    const std::vector<KernelPair>& grid) {
  if (grid.empty()) throw ArgumentError("kernel grid is empty");
  std::vector<SweepRow> rows;
  for (const auto& pair : grid) {
    ModelConfig c = base;
    c.conv1_kernels = pair.first;
    c.conv2_kernels = pair.second;
    c.validate();
    rows.push_back(sweep_point(format_kernel_pair(pair), c, data));
  }
  return rows;
}

Table sweep_table(const std::string& title, const std::string& axis, const std::vector<SweepRow>& rows) {
  Table t;
  t.title = title;
  t.header = {axis, "train accuracy (%)", "test accuracy (%)"};
  for (const auto& r : rows) {
    if (r.diverged) {
      t.rows.push_back({r.point, "DIVERGED", "DIVERGED"});
    } else {
      t.rows.push_back({r.point, format_fixed(100.0 * r.train_accuracy, 3), format_fixed(100.0 * r.test_accuracy, 3)});
    }
  }
  return t;
}

std::uint64_t noise_seed(std::uint64_t seed) {
  constexpr std::uint64_t kNoiseStream = 0x4e4f495345ULL;
  return seed ^ kNoiseStream;
}

std::vector<NoiseRow> noise_robustness(const HybridParams& model, const WindowDataset& test,
                                       const std::vector<double>& snr_list, std::uint64_t seed) {
  std::vector<NoiseRow> rows;
  rows.push_back({std::nullopt, evaluate(model, test)});
  for (std::size_t i = 0; i < snr_list.size(); ++i) {
    Rng rng(noise_seed(seed));
    rows.push_back({snr_list[i], evaluate(model, with_noise(test, snr_list[i], rng))});
  }
  return rows;
}

Table noise_table(const std::vector<NoiseRow>& rows) {
  Table t;
  t.title = "Noise robustness";
  t.header = {"SNR (dB)", "ACC (%)", "F1-score", "MCC", "exact match (%)"};
  for (const auto& r : rows) {
    t.rows.push_back({r.snr_db ? format_double(*r.snr_db) : std::string("clean"), format_fixed(100.0 * r.report.acc, 3),
                      format_fixed(r.report.f1, 4), format_fixed(r.report.mcc, 4),
                      format_fixed(100.0 * r.report.exact_match, 3)});
  }
  return t;
}

std::string accuracy_plot(const TrainHistory& history, const std::string& title) {
  PlotSeries train{"train", {}}, test{"test", {}};
  for (const auto& e : history.epochs) {
    train.points.emplace_back(e.epoch, 100.0 * e.train_accuracy);
    test.points.emplace_back(e.epoch, 100.0 * e.test_accuracy);
  }
  return svg_line_plot(title, "epoch", "accuracy (%)", {train, test});
}

std::string noise_plot(const std::vector<NoiseRow>& rows) {
  std::vector<std::string> categories;
  PlotSeries acc{"ACC", {}}, f1s{"F1", {}}, mccs{"MCC", {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    categories.push_back(r.snr_db ? format_double(*r.snr_db) + " dB" : std::string("clean"));
    const double x = static_cast<double>(i);
    acc.points.emplace_back(x, r.report.acc);
    f1s.points.emplace_back(x, r.report.f1);
    mccs.points.emplace_back(x, r.report.mcc);
  }
  return svg_bar_chart("Performance under noise", "score", categories, {acc, f1s, mccs});
}

}  // namespace nilm
