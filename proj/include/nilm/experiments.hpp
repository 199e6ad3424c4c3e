// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nilm/data.hpp"
#include "nilm/metrics.hpp"
#include "nilm/model.hpp"
#include "nilm/report.hpp"
#include "nilm/training.hpp"

namespace nilm {

enum class ExperimentKind { Synth, Train, Eval, SweepLr, SweepKernels, Noise };

const char* to_string(ExperimentKind kind);

using KernelPair = std::pair<std::size_t, std::size_t>;

struct ExperimentConfig {
  ModelConfig model;
  ExperimentKind kind = ExperimentKind::Train;
  std::filesystem::path data;        // CSV file or archive directory
  std::filesystem::path spec;        // synthetic appliance spec
  std::filesystem::path checkpoint;  // eval / noise
  std::filesystem::path out_dir = "out";
  std::size_t length = 20000;        // synth
  std::size_t train_len = kDefaultTrainLength;
  std::size_t test_len = kDefaultTestLength;
  double on_threshold = kDefaultOnThresholdWatts;
  std::vector<double> lr_grid{1e-3, 1e-4, 1e-5, 1e-6};
  std::vector<KernelPair> kernel_grid{{32, 64}, {32, 128}, {64, 128}, {64, 256}};
  std::vector<double> snr_list{20.0, 30.0, 40.0};
  /// Noise added once to the training windows (ablation); clean when empty.
  std::optional<double> train_snr;
  /// Keys set through apply_experiment_entry, in application order.
  std::vector<std::string> explicit_keys;

  bool is_explicit(const std::string& key) const;
};

/// "1e-3,1e-4" style lists. Throws ConfigError on an empty or malformed list.
std::vector<double> parse_number_list(const std::string& text);
/// "32x64,64x128"
std::vector<KernelPair> parse_kernel_grid(const std::string& text);
std::string format_kernel_pair(const KernelPair& pair);

/// Model keys plus data, spec, checkpoint, out, length, train_len, test_len,
/// threshold, lr_grid, kernel_grid, snr and train_snr.
void apply_experiment_entry(ExperimentConfig& config, const std::string& key, const std::string& value);
/// Overlays a key = value file ('#' comments) onto `config`.
void apply_experiment_file(ExperimentConfig& config, const std::string& text, const std::string& source);
std::string format_experiment_config(const ExperimentConfig& config);

// ---------------------------------------------------------------------------

struct LoadedData {
  SplitDatasets sets;
  std::vector<std::string> appliance_names;
  std::optional<OutputMode> archive_mode;  // set when read from an archive
};

/// A directory is read as an archive; a file as a meter CSV labelled with
/// config.on_threshold. Windows use config.model.window_len. With train_snr
/// set, the training windows receive noise from the config.model.seed stream.
LoadedData load_data(const ExperimentConfig& config);

struct TrainRun {
  HybridParams initial;
  FitResult fit;
  MetricsReport test_report;
};

/// Initializes from config.seed and trains.
TrainRun train_model(const ModelConfig& config, const SplitDatasets& data);

struct SweepRow {
  std::string point;
  bool diverged = false;
  double train_accuracy = 0.0;  // exact match, final parameters
  double test_accuracy = 0.0;
  std::string detail;
};

std::vector<SweepRow> sweep_learning_rate(const ModelConfig& base, const SplitDatasets& data,
                                          const std::vector<double>& grid);
std::vector<SweepRow> sweep_kernels(const ModelConfig& base, const SplitDatasets& data,
                                    const std::vector<KernelPair>& grid);
Table sweep_table(const std::string& title, const std::string& axis, const std::vector<SweepRow>& rows);

struct NoiseRow {
  std::optional<double> snr_db;  // empty for the clean baseline
  MetricsReport report;
};

/// Seed of the noise stream. Every SNR row restarts the same stream, so rows
/// differ only in the noise scale.
std::uint64_t noise_seed(std::uint64_t seed);

/// Clean baseline first, then one row per SNR in list order.
std::vector<NoiseRow> noise_robustness(const HybridParams& model, const WindowDataset& test,
                                       const std::vector<double>& snr_list, std::uint64_t seed);
Table noise_table(const std::vector<NoiseRow>& rows);

/// Accuracy-vs-epoch chart of one history.
std::string accuracy_plot(const TrainHistory& history, const std::string& title);
/// ACC / F1 / MCC per noise level.
std::string noise_plot(const std::vector<NoiseRow>& rows);

}  // namespace nilm
