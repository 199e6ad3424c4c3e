// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "nilm/checkpoint.hpp"
#include "nilm/errors.hpp"
#include "nilm/experiments.hpp"

namespace nilm {
namespace {

namespace fs = std::filesystem;

ModelConfig small_config() {
  ModelConfig c;
  c.window_len = 16;
  c.appliance_count = 3;
  c.conv1_kernels = 3;
  c.conv2_kernels = 4;
  c.padding = 1;
  c.lstm_hidden = 5;
  c.map_dim = 6;
  c.learning_rate = 3e-3;
  c.batch_size = 8;
  c.epochs = 3;
  c.seed = 11;
  return c;
}

SyntheticSpec three_appliances() {
  return parse_synthetic_spec(R"(mode = exclusive
baseline_watts = 30
appliance = lamp
on_power_mean = 60
duty_cycle = 0.3
mean_on_duration = 40
appliance = heater
on_power_mean = 1000
on_power_jitter = 20
duty_cycle = 0.3
mean_on_duration = 40
appliance = oven
on_power_mean = 2200
on_power_jitter = 40
duty_cycle = 0.4
mean_on_duration = 40
)");
}

SplitDatasets small_data() {
  Rng rng(21);
  const auto series = generate_synthetic(three_appliances(), 1600, rng);
  const std::vector<double> th(3, kDefaultOnThresholdWatts);
  return window_and_split(series, make_labels(series, th), 16, 1280, 320);
}

// Minimal XML well-formedness: balanced tags, known prolog, no stray '<'.
bool well_formed_xml(const std::string& doc, std::string& why) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  if (doc.rfind("<?xml", 0) == 0) i = doc.find("?>") + 2;
  bool seen_root = false;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const std::size_t close = doc.find('>', i);
    if (close == std::string::npos) {
      why = "unterminated tag";
      return false;
    }
    std::string tag = doc.substr(i + 1, close - i - 1);
    if (tag.find('<') != std::string::npos) {
      why = "'<' inside tag";
      return false;
    }
    if (!tag.empty() && tag[0] == '/') {
      const std::string name = tag.substr(1);
      if (stack.empty() || stack.back() != name) {
        why = "mismatched </" + name + ">";
        return false;
      }
      stack.pop_back();
    } else if (!tag.empty() && tag.back() == '/') {
      seen_root = true;
    } else {
      stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
      seen_root = true;
    }
    i = close + 1;
  }
  if (!stack.empty()) {
    why = "unclosed <" + stack.back() + ">";
    return false;
  }
  return seen_root;
}

// ---------------------------------------------------------------------------

TEST(Grids, NumberAndKernelLists) {
  EXPECT_EQ(parse_number_list("1e-3, 1e-4,0.5"), (std::vector<double>{1e-3, 1e-4, 0.5}));
  EXPECT_EQ(parse_number_list("7"), (std::vector<double>{7}));
  for (const char* bad : {"", "1,,2", "1e-3,abc", ","}) EXPECT_THROW(parse_number_list(bad), ConfigError) << bad;
  const auto grid = parse_kernel_grid("32x64, 64x256");
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_EQ(grid[1], (KernelPair{64, 256}));
  EXPECT_EQ(format_kernel_pair(grid[0]), "(32,64)");
  for (const char* bad : {"", "32", "32x", "x64", "32x64x2", "0x4"}) EXPECT_THROW(parse_kernel_grid(bad), ConfigError) << bad;
}

TEST(ExperimentConfig, DefaultSweepGrids) {
  const ExperimentConfig c;
  EXPECT_EQ(c.lr_grid, (std::vector<double>{1e-3, 1e-4, 1e-5, 1e-6}));
  EXPECT_EQ(c.kernel_grid, (std::vector<KernelPair>{{32, 64}, {32, 128}, {64, 128}, {64, 256}}));
  EXPECT_EQ(c.snr_list, (std::vector<double>{20, 30, 40}));
  EXPECT_EQ(c.train_len, 15000u);
  EXPECT_EQ(c.test_len, 5000u);
}

TEST(ExperimentConfig, FileOverlayAndErrors) {
  ExperimentConfig c;
  apply_experiment_file(c, "# comment\nepochs = 7\nlr_grid = 1e-2,1e-3\n\ntrain_snr = 25\nout = runs/a\n", "x.cfg");
  EXPECT_EQ(c.model.epochs, 7);
  EXPECT_EQ(c.lr_grid, (std::vector<double>{1e-2, 1e-3}));
  ASSERT_TRUE(c.train_snr.has_value());
  EXPECT_EQ(*c.train_snr, 25.0);
  EXPECT_EQ(c.out_dir, fs::path("runs/a"));
  EXPECT_TRUE(c.is_explicit("epochs"));
  EXPECT_FALSE(c.is_explicit("seed"));
  apply_experiment_entry(c, "train_snr", "none");
  EXPECT_FALSE(c.train_snr.has_value());

  try {
    apply_experiment_file(c, "epochs = 3\nvolume = 11\n", "y.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("y.cfg:2"), std::string::npos) << e.what();
  }
  try {
    apply_experiment_file(c, "epochs 3\n", "z.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(ExperimentConfig, FormattedConfigReappliesToTheSameValues) {
  ExperimentConfig c;
  c.kind = ExperimentKind::SweepKernels;
  apply_experiment_file(c, "seed = 9\nwindow_len = 49\nkernel_grid = 8x16,16x32\nsnr = 10,50\nthreshold = 15\n", "a");
  ExperimentConfig back;
  apply_experiment_file(back, format_experiment_config(c), "b");
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.kernel_grid, c.kernel_grid);
  EXPECT_EQ(back.snr_list, c.snr_list);
  EXPECT_EQ(back.on_threshold, 15.0);
  EXPECT_EQ(back.lr_grid, c.lr_grid);
}

// ---------------------------------------------------------------------------

TEST(LoadData, CsvFileAndArchiveAgree) {
  Rng rng(22);
  const auto series = generate_synthetic(three_appliances(), 1600, rng);
  const auto dir = fs::temp_directory_path() / "nilm_experiments_load";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_csv(dir / "meter.csv", series);
  const std::vector<double> th(3, kDefaultOnThresholdWatts);
  write_archive(dir / "archive", make_archive(series, make_labels(series, th), 16, 1280, 320, "exclusive"));

  ExperimentConfig c;
  c.model = small_config();
  c.train_len = 1280;
  c.test_len = 320;
  c.data = dir / "meter.csv";
  const auto from_csv = load_data(c);
  c.data = dir / "archive";
  const auto from_archive = load_data(c);
  EXPECT_EQ(from_csv.sets.train.windows, from_archive.sets.train.windows);
  EXPECT_EQ(from_csv.sets.test.labels, from_archive.sets.test.labels);
  EXPECT_FALSE(from_csv.archive_mode.has_value());
  ASSERT_TRUE(from_archive.archive_mode.has_value());
  EXPECT_EQ(*from_archive.archive_mode, OutputMode::SoftmaxExclusive);
  EXPECT_EQ(from_archive.appliance_names, (std::vector<std::string>{"lamp", "heater", "oven"}));

  c.train_snr = 20.0;
  const auto noisy = load_data(c);
  EXPECT_FALSE(noisy.sets.train.windows == from_archive.sets.train.windows);
  EXPECT_EQ(noisy.sets.test.windows, from_archive.sets.test.windows);
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------

TEST(Sweeps, OneRowPerPointInGridOrder) {
  const auto data = small_data();
  const auto lr_rows = sweep_learning_rate(small_config(), data, {1e-2, 1e-3, 1e-4, 1e-5});
  ASSERT_EQ(lr_rows.size(), 4u);
  for (const auto& r : lr_rows) {
    EXPECT_FALSE(r.diverged);
    EXPECT_GE(r.test_accuracy, 0.0);
    EXPECT_LE(r.test_accuracy, 1.0);
  }
  const auto table = sweep_table("Learning rate", "learning rate", lr_rows);
  EXPECT_EQ(table.header.size(), 3u);
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.rows[0][0], lr_rows[0].point);

  const auto single = sweep_learning_rate(small_config(), data, {1e-3});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].test_accuracy, lr_rows[1].test_accuracy);

  const auto k_rows = sweep_kernels(small_config(), data, {{2, 3}, {3, 5}});
  ASSERT_EQ(k_rows.size(), 2u);
  EXPECT_EQ(k_rows[0].point, "(2,3)");
  EXPECT_EQ(k_rows[1].point, "(3,5)");
  EXPECT_THROW(sweep_kernels(small_config(), data, {}), ArgumentError);
  EXPECT_THROW(sweep_learning_rate(small_config(), data, {}), ArgumentError);
}

TEST(Sweeps, DivergentPointIsReportedNotThrown) {
  const auto data = small_data();
  auto c = small_config();
  c.clip_norm = 0.0;
  const auto rows = sweep_learning_rate(c, data, {1e300, 1e-3});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_TRUE(rows[0].diverged);
  EXPECT_FALSE(rows[1].diverged);
  const auto text = sweep_table("t", "learning rate", rows).to_text();
  EXPECT_NE(text.find("DIVERGED"), std::string::npos) << text;
}

TEST(TrainModel, MatchesAManualFit) {
  const auto data = small_data();
  const auto c = small_config();
  const auto run = train_model(c, data);
  Rng rng(c.seed);
  const auto init = build_model(c, rng);
  EXPECT_EQ(encode_checkpoint(init), encode_checkpoint(run.initial));
  const auto report = evaluate(run.fit.params, data.test);
  EXPECT_EQ(report.counts, run.test_report.counts);
  EXPECT_EQ(run.fit.history.epochs.size(), 3u);
}

// ---------------------------------------------------------------------------

TEST(Noise, RowsMatchAManualEvaluation) {
  const auto data = small_data();
  const auto run = train_model(small_config(), data);
  const std::vector<double> snrs{20, 30, 40};
  const auto rows = noise_robustness(run.fit.params, data.test, snrs, 77);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].snr_db.has_value());
  EXPECT_EQ(rows[0].report.counts, evaluate(run.fit.params, data.test).counts);
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    ASSERT_TRUE(rows[i + 1].snr_db.has_value());
    EXPECT_EQ(*rows[i + 1].snr_db, snrs[i]);
    Rng rng(noise_seed(77));
    const auto manual = evaluate(run.fit.params, with_noise(data.test, snrs[i], rng));
    EXPECT_EQ(rows[i + 1].report.counts, manual.counts);
  }
  const auto table = noise_table(rows);
  ASSERT_EQ(table.rows.size(), 4u);
  EXPECT_EQ(table.rows[0][0], "clean");
}

TEST(Noise, VanishingNoiseMatchesTheCleanRow) {
  const auto data = small_data();
  const auto run = train_model(small_config(), data);
  const auto rows = noise_robustness(run.fit.params, data.test, {300.0}, 5);
  EXPECT_NEAR(rows[1].report.acc * 100.0, rows[0].report.acc * 100.0, 0.1);
}

// ---------------------------------------------------------------------------

TEST(Report, TablesRenderConsistently) {
  const auto t = confusion_table({1826, 2, 2, 3172});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0], (std::vector<std::string>{"positive", "1826", "2"}));
  EXPECT_EQ(t.rows[1], (std::vector<std::string>{"negative", "2", "3172"}));
  const auto m = metrics_table({{"hybrid", make_report({1826, 2, 2, 3172})}});
  EXPECT_EQ(m.rows[0][1], "99.92");
  EXPECT_EQ(m.rows[0][2], "0.9989");
  EXPECT_EQ(m.rows[0][3], "0.9983");

  Table quoted{"q", {"a", "b"}, {{"x,y", "say \"hi\""}}};
  EXPECT_EQ(quoted.to_csv(), "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
  const auto text = quoted.to_text();
  EXPECT_EQ(text.rfind("q\n", 0), 0u) << text;
}

TEST(Report, SvgOutputIsWellFormed) {
  TrainHistory h;
  for (int e = 1; e <= 5; ++e) h.epochs.push_back({e, 1.0 / e, 0.1 * e, 0.09 * e, 0.5});
  std::string why;
  const auto line = accuracy_plot(h, "a < b & c");
  EXPECT_TRUE(well_formed_xml(line, why)) << why;
  EXPECT_NE(line.find("a &lt; b &amp; c"), std::string::npos);

  std::vector<NoiseRow> rows{{std::nullopt, make_report({5, 1, 1, 5})}, {20.0, make_report({4, 2, 2, 4})}};
  EXPECT_TRUE(well_formed_xml(noise_plot(rows), why)) << why;

  EXPECT_TRUE(well_formed_xml(svg_line_plot("empty", "x", "y", {}), why)) << why;
  EXPECT_TRUE(well_formed_xml(svg_line_plot("flat", "x", "y", {{"s", {{0, 1}, {1, 1}}}}), why)) << why;
}

TEST(Report, TagCheckerRejectsBrokenDocuments) {
  std::string why;
  EXPECT_FALSE(well_formed_xml("<svg><g></svg>", why));
  EXPECT_FALSE(well_formed_xml("<svg><g>", why));
  EXPECT_TRUE(well_formed_xml("<svg><g/></svg>", why));
}

}  // namespace
}  // namespace nilm
