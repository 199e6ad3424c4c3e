// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nilm/tensor.hpp"

namespace nilm {

/// Uniformly sampled whole-home and per-appliance active power.
struct RawMeterSeries {
  std::vector<std::int64_t> timestamps;  // seconds, strictly increasing
  std::vector<double> aggregate;         // watts
  std::vector<std::string> appliance_names;
  std::vector<std::vector<double>> appliance_power;  // K sequences, watts

  std::size_t size() const { return timestamps.size(); }
  std::size_t appliance_count() const { return appliance_names.size(); }

  /// Throws ArgumentError when lengths disagree, timestamps are not strictly
  /// increasing or any power is negative.
  void validate() const;
};

/*
 * CSV schema (UTF-8, header row):
 *
 *   timestamp,aggregate,<appliance_1>,...,<appliance_K>
 *
 * timestamp is integer seconds, powers are decimal watts.
 */
RawMeterSeries parse_csv(const std::string& text, const std::string& source = "<csv>");
RawMeterSeries load_csv(const std::filesystem::path& path);
std::string format_csv(const RawMeterSeries& series);
void write_csv(const std::filesystem::path& path, const RawMeterSeries& series);

// ---------------------------------------------------------------------------
// Synthetic appliances

enum class SignatureShape { Flat, Ramp, Cyclic };

struct ApplianceSpec {
  std::string name;
  double on_power_mean = 100.0;  // watts
  double on_power_jitter = 0.0;  // stddev, watts
  double duty_cycle = 0.5;       // [0, 1]
  double mean_on_duration = 100.0;   // samples
  double mean_off_duration = 100.0;  // samples
  SignatureShape signature = SignatureShape::Flat;
  std::size_t cycle_period = 20;  // samples, Cyclic only

  void validate() const;
};

struct SyntheticSpec {
  std::vector<ApplianceSpec> appliances;
  /// At most one appliance on at any instant (hand-off schedule).
  bool exclusive = false;
  double baseline_watts = 0.0;
  std::int64_t start_timestamp = 1356998400;  // 2013-01-01T00:00:00Z
  std::int64_t sample_period = 6;             // seconds

  void validate() const;
};

/*
 * Plain-text spec: '#' comments, one "key = value" per line. Global keys
 * (mode, baseline_watts, start_timestamp, sample_period) come first; each
 * "appliance = <name>" line opens a block for the keys that follow:
 *
 *   mode = exclusive            # or independent
 *   appliance = kettle
 *   on_power_mean = 2000
 *   on_power_jitter = 40
 *   duty_cycle = 0.25
 *   mean_on_duration = 150
 *   mean_off_duration = 450
 *   signature = flat            # flat | ramp | cyclic:<period>
 */
SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& source = "<spec>");
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

/*
 * Independent mode: each appliance alternates on and off bouts with
 * geometric durations of the configured means, starting on with probability
 * duty_cycle (0 and 1 pin the state). Exclusive mode: a single chain of on
 * bouts, each handed to an appliance drawn with probability proportional to
 * its duty cycle, so exactly one appliance with a positive duty cycle is on at
 * every instant. On-power is mean * shape(t) + jitter * N(0, 1), floored at 0.
 */
RawMeterSeries generate_synthetic(const SyntheticSpec& spec, std::size_t length, Rng& rng);

// ---------------------------------------------------------------------------
// Labels, normalization, windows

inline constexpr double kDefaultOnThresholdWatts = 10.0;

/// N x K matrix, 1 where the appliance draws more than its threshold.
Tensor make_labels(const RawMeterSeries& series, std::span<const double> thresholds);

struct NormStats {
  double min = 0.0;
  double max = 1.0;

  double apply(double x) const { return (x - min) / (max - min); }
  double invert(double x) const { return x * (max - min) + min; }
};

struct NormalizedPair {
  std::vector<double> train;
  std::vector<double> test;
  NormStats stats;
};

/// Min-max scaling with statistics taken from the training part only.
NormalizedPair normalize(std::span<const double> train, std::span<const double> test);

enum class SplitTag { Train, Test };

struct WindowDataset {
  Tensor windows;  // N x L normalized aggregate power
  Tensor labels;   // N x K in {0, 1}
  NormStats norm;
  SplitTag split = SplitTag::Train;
  std::size_t first_sample = 0;  // series index of the first window's first sample

  std::size_t size() const { return windows.empty() ? 0 : windows.dim(0); }
  std::size_t window_len() const { return windows.dim(1); }
  std::size_t appliance_count() const { return labels.dim(1); }
  Tensor window(std::size_t i) const;
  Tensor label(std::size_t i) const;
};

struct SplitDatasets {
  WindowDataset train;
  WindowDataset test;
};

inline constexpr std::size_t kDefaultTrainLength = 15000;
inline constexpr std::size_t kDefaultTestLength = 5000;

/// Temporal split (first train_len samples, then the next test_len), non
/// overlapping windows, each labelled with the state at its final instant.
SplitDatasets window_and_split(const RawMeterSeries& series, const Tensor& labels, std::size_t window_len,
                               std::size_t train_len = kDefaultTrainLength, std::size_t test_len = kDefaultTestLength);

/// Adds white Gaussian noise with variance mean_square(windows) / 10^(snr/10).
Tensor inject_noise(const Tensor& windows, double snr_db, Rng& rng);
WindowDataset with_noise(const WindowDataset& data, double snr_db, Rng& rng);

/// 10 log10(P_signal / P_noise) with noise = noisy - clean.
double measured_snr_db(const Tensor& clean, const Tensor& noisy);

// ---------------------------------------------------------------------------
// Dataset archive: a directory holding
//   data.csv    the raw series in the CSV schema above
//   labels.csv  one header row of appliance names, then one 0/1 row per sample
//   norm.json   {"min": ..., "max": ...} of the training aggregate
//   meta.json   window_len, appliance_count, appliances, split boundaries, mode

struct DatasetArchive {
  RawMeterSeries series;
  Tensor labels;  // N x K
  NormStats norm;
  std::size_t window_len = 100;
  std::size_t train_len = kDefaultTrainLength;
  std::size_t test_len = kDefaultTestLength;
  std::string mode = "exclusive";

  SplitDatasets split() const;
};

DatasetArchive make_archive(RawMeterSeries series, Tensor labels, std::size_t window_len, std::size_t train_len,
                            std::size_t test_len, std::string mode);
void write_archive(const std::filesystem::path& dir, const DatasetArchive& archive);
DatasetArchive read_archive(const std::filesystem::path& dir);

}  // namespace nilm
