// SPDX-License-Identifier: Apache-2.0
//
// nilm: synthesize datasets, train, evaluate, sweep and stress-test models.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "nilm/checkpoint.hpp"
#include "nilm/errors.hpp"
#include "nilm/experiments.hpp"
#include "nilm/text.hpp"

namespace {

using namespace nilm;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kFailure = 1, kBadConfig = 2, kDiverged = 3 };

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct Flags {
  std::string config_file;
  std::map<std::string, std::string> values;  // experiment key -> raw flag text
  std::vector<std::string> sets;              // --set key=value
  std::string axis = "lr";
};

void add_value(CLI::App& app, Flags& flags, const std::string& name, const std::string& key,
               const std::string& help) {
  app.add_option_function<std::string>(
      name, [&flags, key](const std::string& v) { flags.values[key] = v; }, help);
}

ExperimentConfig resolve(const Flags& flags, ExperimentKind kind) {
  ExperimentConfig config;
  config.kind = kind;
  if (!flags.config_file.empty()) {
    apply_experiment_file(config, read_file(flags.config_file), flags.config_file);
  }
  for (const auto& [key, value] : flags.values) apply_experiment_entry(config, key, value);
  for (const auto& entry : flags.sets) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + entry + "'");
    apply_experiment_entry(config, std::string(trim(entry.substr(0, eq))), std::string(trim(entry.substr(eq + 1))));
  }
  return config;
}

void echo_config(const ExperimentConfig& config) {
  fs::create_directories(config.out_dir);
  write_file(config.out_dir / "config.txt", format_experiment_config(config));
}

/// The dataset decides K and, unless given, the output mode.
void fit_to_data(ExperimentConfig& config, const LoadedData& data) {
  config.model.appliance_count = data.appliance_names.size();
  if (data.archive_mode && !config.is_explicit("output_mode")) config.model.output_mode = *data.archive_mode;
  config.model.validate();
}

void emit_table(const fs::path& dir, const std::string& stem, const Table& table) {
  std::cout << table.to_text() << '\n';
  write_file(dir / (stem + ".txt"), table.to_text());
  write_file(dir / (stem + ".csv"), table.to_csv());
}

// ---------------------------------------------------------------------------

int cmd_synth(ExperimentConfig config) {
  if (config.spec.empty()) throw ConfigError("synth needs --spec");
  const auto spec = load_synthetic_spec(config.spec);
  Rng rng(config.model.seed);
  auto series = generate_synthetic(spec, config.length, rng);
  const std::vector<double> thresholds(series.appliance_count(), config.on_threshold);
  auto labels = make_labels(series, thresholds);
  const auto archive = make_archive(std::move(series), std::move(labels), config.model.window_len, config.train_len,
                                    config.test_len, spec.exclusive ? "exclusive" : "multilabel");
  write_archive(config.out_dir, archive);
  echo_config(config);

  const std::size_t n = archive.series.size(), k_count = archive.series.appliance_count();
  std::cout << "appliances " << k_count << ", samples " << n << ", train " << config.train_len << ", test "
            << config.test_len << ", mode " << archive.mode << '\n';
  for (std::size_t k = 0; k < k_count; ++k) {
    double on = 0.0;
    for (std::size_t t = 0; t < n; ++t) on += archive.labels[t * k_count + k];
    std::cout << "  " << archive.series.appliance_names[k] << " duty " << format_fixed(on / static_cast<double>(n), 3)
              << '\n';
  }
  return kOk;
}

int cmd_train(ExperimentConfig config) {
  const auto data = load_data(config);
  fit_to_data(config, data);
  echo_config(config);
  const auto run = train_model(config.model, data.sets);
  save_checkpoint(config.out_dir / "checkpoint.bin", run.fit.params);
  write_file(config.out_dir / "history.csv", run.fit.history.to_csv());
  write_file(config.out_dir / "accuracy.svg",
             accuracy_plot(run.fit.history, std::string("Accuracy (") + to_string(config.model.arch) + ")"));
  write_file(config.out_dir / "metrics.txt", run.test_report.to_kv());
  const auto& last = run.fit.history.epochs;
  if (!last.empty()) {
    std::cout << "epochs " << last.size() << ", train accuracy " << format_fixed(100.0 * last.back().train_accuracy, 3)
              << "%, test accuracy " << format_fixed(100.0 * last.back().test_accuracy, 3) << "%\n";
  }
  std::cout << "wrote " << (config.out_dir / "checkpoint.bin").string() << '\n';
  return kOk;
}

HybridParams load_model(ExperimentConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto params = load_checkpoint(config.checkpoint);
  config.model = params.config;
  return params;
}

int cmd_eval(ExperimentConfig config) {
  const auto params = load_model(config);
  const auto data = load_data(config);
  echo_config(config);
  const auto report = evaluate(params, data.sets.test);
  emit_table(config.out_dir, "confusion", confusion_table(report.counts));
  emit_table(config.out_dir, "metrics", metrics_table({{to_string(params.config.arch), report}}));
  write_file(config.out_dir / "metrics_full.txt", report.to_kv());
  return kOk;
}

int cmd_sweep(ExperimentConfig config, const std::string& axis) {
  const auto data = load_data(config);
  fit_to_data(config, data);
  echo_config(config);
  std::vector<SweepRow> rows;
  Table table;
  if (axis == "lr") {
    rows = sweep_learning_rate(config.model, data.sets, config.lr_grid);
    table = sweep_table("Learning-rate sensitivity", "learning rate", rows);
  } else if (axis == "kernels") {
    rows = sweep_kernels(config.model, data.sets, config.kernel_grid);
    table = sweep_table("Kernel-count sensitivity", "kernels (conv1,conv2)", rows);
  } else {
    throw ConfigError("--axis must be lr or kernels, got '" + axis + "'");
  }
  emit_table(config.out_dir, "sweep_" + axis, table);
  for (const auto& r : rows) {
    if (r.diverged) std::cerr << "point " << r.point << " diverged: " << r.detail << '\n';
  }
  return kOk;
}

int cmd_noise(ExperimentConfig config) {
  const auto params = load_model(config);
  const auto data = load_data(config);
  echo_config(config);
  const auto rows = noise_robustness(params, data.sets.test, config.snr_list, config.model.seed);
  emit_table(config.out_dir, "noise", noise_table(rows));
  write_file(config.out_dir / "noise.svg", noise_plot(rows));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Appliance state recognition from aggregate power"};
  app.require_subcommand(1);
  app.fallthrough();

  Flags flags;
  app.add_option("--config", flags.config_file, "key = value file applied before flags")->check(CLI::ExistingFile);
  add_value(app, flags, "--data", "data", "meter CSV or dataset archive directory");
  add_value(app, flags, "--out", "out", "output directory");
  add_value(app, flags, "--seed", "seed", "random seed");
  add_value(app, flags, "--arch", "arch", "hybrid, cnn or lstm");
  add_value(app, flags, "--epochs", "epochs", "training epochs");
  add_value(app, flags, "--lr", "learning_rate", "Adam learning rate");
  add_value(app, flags, "--batch", "batch_size", "minibatch size");
  add_value(app, flags, "--window", "window_len", "window length (perfect square)");
  add_value(app, flags, "--mode", "output_mode", "exclusive or multilabel");
  add_value(app, flags, "--snr", "snr", "comma-separated SNR list in dB");
  add_value(app, flags, "--train-snr", "train_snr", "noise added to training windows, dB");
  add_value(app, flags, "--spec", "spec", "synthetic appliance spec");
  add_value(app, flags, "--length", "length", "synthetic series length");
  add_value(app, flags, "--train-len", "train_len", "samples in the training split");
  add_value(app, flags, "--test-len", "test_len", "samples in the test split");
  add_value(app, flags, "--threshold", "threshold", "on/off threshold in watts for CSV input");
  add_value(app, flags, "--checkpoint", "checkpoint", "trained checkpoint");
  app.add_option("--set", flags.sets, "extra key=value overrides");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset archive");
  auto* train = app.add_subcommand("train", "train a model");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  auto* sweep = app.add_subcommand("sweep", "train one model per grid point");
  auto* noise = app.add_subcommand("noise", "evaluate a checkpoint under injected noise");
  sweep->add_option("--axis", flags.axis, "lr or kernels")->check(CLI::IsMember({"lr", "kernels"}));
  std::string grid;
  sweep->add_option("--grid", grid, "lr list (1e-3,1e-4) or kernel pairs (32x64,64x128)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(resolve(flags, ExperimentKind::Synth));
    if (*train) return cmd_train(resolve(flags, ExperimentKind::Train));
    if (*eval) return cmd_eval(resolve(flags, ExperimentKind::Eval));
    if (*noise) return cmd_noise(resolve(flags, ExperimentKind::Noise));
    if (*sweep) {
      if (!grid.empty()) flags.values[flags.axis == "lr" ? "lr_grid" : "kernel_grid"] = grid;
      return cmd_sweep(resolve(flags, flags.axis == "lr" ? ExperimentKind::SweepLr : ExperimentKind::SweepKernels),
                       flags.axis);
    }
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
