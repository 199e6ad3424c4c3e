// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "nilm/errors.hpp"
#include "nilm/data.hpp"

namespace nilm {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("nilm_data_test_" + name);
  fs::remove_all(dir);
  return dir;
}

const char* kFourAppliances = R"(# test household
mode = exclusive
baseline_watts = 20
appliance = fridge
on_power_mean = 150
on_power_jitter = 5
duty_cycle = 0.3
mean_on_duration = 200
signature = cyclic:20
appliance = washer
on_power_mean = 700
on_power_jitter = 20
duty_cycle = 0.2
mean_on_duration = 200
signature = ramp
appliance = microwave
on_power_mean = 1300
duty_cycle = 0.2
mean_on_duration = 200
appliance = kettle
on_power_mean = 2000
on_power_jitter = 50
duty_cycle = 0.3
mean_on_duration = 200
)";

RawMeterSeries random_series(std::size_t n, std::size_t k_count, Rng& rng) {
  RawMeterSeries s;
  for (std::size_t k = 0; k < k_count; ++k) s.appliance_names.push_back("a" + std::to_string(k));
  s.appliance_power.assign(k_count, {});
  for (std::size_t t = 0; t < n; ++t) {
    s.timestamps.push_back(1000 + 6 * static_cast<std::int64_t>(t));
    double total = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      const double p = rng.below(3) == 0 ? 0.0 : 100.0 * rng.uniform();
      s.appliance_power[k].push_back(p);
      total += p;
    }
    s.aggregate.push_back(total + 5.0);
  }
  return s;
}

// ---------------------------------------------------------------------------

TEST(Csv, ParsesAWellFormedFile) {
  const auto s = parse_csv("timestamp,aggregate,fridge,kettle\n0,120.5,100,0\n6,2100,100,1980.25\n12,20,0,0\n");
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.appliance_names, (std::vector<std::string>{"fridge", "kettle"}));
  EXPECT_EQ(s.timestamps[2], 12);
  EXPECT_EQ(s.aggregate[1], 2100.0);
  EXPECT_EQ(s.appliance_power[1][1], 1980.25);
}

TEST(Csv, MissingAggregateColumnIsNamed) {
  try {
    (void)parse_csv("timestamp,fridge\n0,1\n", "meter.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("aggregate"), std::string::npos) << e.what();
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(Csv, ErrorsCarryTheLineNumber) {
  const std::pair<const char*, std::size_t> cases[] = {
      {"timestamp,aggregate,a\n0,1,1\n6,1\n", 3},            // short row
      {"timestamp,aggregate,a\n0,1,1\n6,x,1\n", 3},          // not a number
      {"timestamp,aggregate,a\n0,1,1\n0,1,1\n", 3},          // timestamps must increase
      {"timestamp,aggregate,a\n0,1,1\n6,1,-4\n12,1,1\n", 3},  // negative power
      {"timestamp,aggregate,a\n1.5,1,1\n", 2},               // fractional timestamp
  };
  for (const auto& [text, line] : cases) {
    try {
      (void)parse_csv(text);
      ADD_FAILURE() << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  }
}

TEST(Csv, RoundTripIsExact) {
  Rng rng(1);
  const auto s = random_series(200, 3, rng);
  const std::string text = format_csv(s);
  const auto back = parse_csv(text);
  EXPECT_EQ(back.timestamps, s.timestamps);
  EXPECT_EQ(back.aggregate, s.aggregate);
  EXPECT_EQ(back.appliance_power, s.appliance_power);
  EXPECT_EQ(format_csv(back), text);
}

TEST(Csv, SampleFileInTheRepositoryParses) {
  const auto s = load_csv(fs::path(NILM_SOURCE_DIR) / "configs" / "sample_meter.csv");
  EXPECT_EQ(s.size(), 10u);
  EXPECT_GE(s.appliance_count(), 1u);
}

// ---------------------------------------------------------------------------

TEST(SyntheticSpec, ParsesBlocksAndSignatures) {
  const auto spec = parse_synthetic_spec(kFourAppliances);
  ASSERT_EQ(spec.appliances.size(), 4u);
  EXPECT_TRUE(spec.exclusive);
  EXPECT_EQ(spec.baseline_watts, 20.0);
  EXPECT_EQ(spec.appliances[0].signature, SignatureShape::Cyclic);
  EXPECT_EQ(spec.appliances[0].cycle_period, 20u);
  EXPECT_EQ(spec.appliances[1].signature, SignatureShape::Ramp);
  EXPECT_EQ(spec.appliances[2].signature, SignatureShape::Flat);
  EXPECT_EQ(spec.appliances[3].on_power_jitter, 50.0);
}

TEST(SyntheticSpec, InvalidValuesReportTheirLine) {
  const std::pair<const char*, std::size_t> cases[] = {
      {"appliance = a\nduty_cycle = 1.5\n", 2},
      {"appliance = a\non_power_mean = -1\n", 2},
      {"mode = sometimes\n", 1},
      {"on_power_mean = 100\n", 1},  // before any appliance block
      {"appliance = a\nsignature = zigzag\n", 2},
      {"appliance = a\nvolume = 11\n", 2},
      {"appliance = a\njust text\n", 2},
  };
  for (const auto& [text, line] : cases) {
    try {
      (void)parse_synthetic_spec(text);
      ADD_FAILURE() << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  }
}

TEST(Synthetic, AlwaysOnFlatApplianceGivesConstantAggregate) {
  SyntheticSpec spec;
  spec.appliances.push_back({"heater", 100.0, 0.0, 1.0, 50.0, 50.0, SignatureShape::Flat, 20});
  Rng rng(2);
  const auto s = generate_synthetic(spec, 500, rng);
  for (double v : s.aggregate) EXPECT_EQ(v, 100.0);
}

TEST(Synthetic, ZeroDutyApplianceStaysOff) {
  SyntheticSpec spec;
  spec.appliances.push_back({"idle", 500.0, 10.0, 0.0, 50.0, 50.0, SignatureShape::Flat, 20});
  spec.appliances.push_back({"busy", 200.0, 10.0, 0.5, 50.0, 50.0, SignatureShape::Flat, 20});
  Rng rng(3);
  const auto s = generate_synthetic(spec, 2000, rng);
  const std::vector<double> th(2, kDefaultOnThresholdWatts);
  const auto labels = make_labels(s, th);
  for (std::size_t t = 0; t < s.size(); ++t) {
    EXPECT_EQ(s.appliance_power[0][t], 0.0);
    EXPECT_EQ(labels.at(t, 0), 0.0);
  }
}

TEST(Synthetic, ExclusiveScheduleHasExactlyOneActiveAppliance) {
  const auto spec = parse_synthetic_spec(kFourAppliances);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto s = generate_synthetic(spec, 20000, rng);
    const std::vector<double> th(4, kDefaultOnThresholdWatts);
    const auto labels = make_labels(s, th);
    for (std::size_t t = 0; t < s.size(); ++t) {
      double active = 0.0;
      for (std::size_t k = 0; k < 4; ++k) active += labels.at(t, k);
      ASSERT_EQ(active, 1.0) << "seed " << seed << " t " << t;
    }
  }
}

TEST(Synthetic, AggregateIsBaselinePlusAppliances) {
  const auto spec = parse_synthetic_spec(kFourAppliances);
  Rng rng(4);
  const auto s = generate_synthetic(spec, 3000, rng);
  for (std::size_t t = 0; t < s.size(); ++t) {
    double total = spec.baseline_watts;
    for (std::size_t k = 0; k < 4; ++k) total += s.appliance_power[k][t];
    EXPECT_NEAR(s.aggregate[t], total, 1e-9);
  }
  EXPECT_EQ(s.timestamps.front(), spec.start_timestamp);
  EXPECT_EQ(s.timestamps[1] - s.timestamps[0], spec.sample_period);
}

TEST(Synthetic, IndependentDutyCyclesAreRespected) {
  SyntheticSpec spec;
  spec.appliances.push_back({"a", 300.0, 5.0, 0.3, 40.0, 90.0, SignatureShape::Flat, 20});
  spec.appliances.push_back({"b", 800.0, 5.0, 0.7, 70.0, 30.0, SignatureShape::Flat, 20});
  Rng rng(5);
  const auto s = generate_synthetic(spec, 200000, rng);
  const std::vector<double> th(2, kDefaultOnThresholdWatts);
  const auto labels = make_labels(s, th);
  double on[2] = {0, 0};
  for (std::size_t t = 0; t < s.size(); ++t) {
    on[0] += labels.at(t, 0);
    on[1] += labels.at(t, 1);
  }
  EXPECT_NEAR(on[0] / 200000.0, 40.0 / 130.0, 0.03);
  EXPECT_NEAR(on[1] / 200000.0, 70.0 / 100.0, 0.03);
}

TEST(Synthetic, SameSeedSameSeries) {
  const auto spec = parse_synthetic_spec(kFourAppliances);
  Rng a(9), b(9);
  EXPECT_EQ(format_csv(generate_synthetic(spec, 5000, a)), format_csv(generate_synthetic(spec, 5000, b)));
}

// ---------------------------------------------------------------------------

TEST(Labels, ThresholdComparison) {
  RawMeterSeries s;
  s.timestamps = {0, 6, 12};
  s.aggregate = {50, 10, 0};
  s.appliance_names = {"x", "y"};
  s.appliance_power = {{50, 10, 0}, {0, 0, 0}};
  const std::vector<double> th{10.0, 10.0};
  EXPECT_EQ(make_labels(s, th), Tensor({3, 2}, {1, 0, 0, 0, 0, 0}));
}

TEST(Labels, MatchARescanAndIgnoreTheAggregate) {
  Rng rng(6);
  auto s = random_series(300, 4, rng);
  const std::vector<double> th{5.0, 20.0, 50.0, 80.0};
  const Tensor labels = make_labels(s, th);
  for (std::size_t t = 0; t < s.size(); ++t) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(labels.at(t, k), s.appliance_power[k][t] > th[k] ? 1.0 : 0.0);
  }
  for (auto& v : s.aggregate) v *= 3.0;
  EXPECT_EQ(make_labels(s, th), labels);
}

TEST(Normalize, MinMaxFromTrainOnly) {
  const std::vector<double> train{0, 5, 10}, test{20, -5};
  const auto n = normalize(train, test);
  EXPECT_EQ(n.train, (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(n.test[0], 2.0);
  EXPECT_EQ(n.test[1], -0.5);
  const std::vector<double> flat{3, 3, 3};
  EXPECT_THROW(normalize(flat, test), ArgumentError);
}

TEST(Normalize, IsInvertibleOnTrainingData) {
  Rng rng(7);
  std::vector<double> train(500);
  for (auto& v : train) v = 3000.0 * rng.uniform();
  const auto n = normalize(train, {});
  for (std::size_t i = 0; i < train.size(); ++i) {
    EXPECT_GE(n.train[i], 0.0);
    EXPECT_LE(n.train[i], 1.0);
    EXPECT_NEAR(n.stats.invert(n.train[i]), train[i], 1e-12 * 3000.0);
  }
}

TEST(WindowAndSplit, CountsAndDisjointRanges) {
  Rng rng(8);
  const auto s = random_series(20000, 2, rng);
  const std::vector<double> th(2, 10.0);
  const auto sets = window_and_split(s, make_labels(s, th), 100);
  EXPECT_EQ(sets.train.size(), 150u);
  EXPECT_EQ(sets.test.size(), 50u);
  EXPECT_EQ(sets.train.first_sample, 0u);
  EXPECT_EQ(sets.test.first_sample, 15000u);
  EXPECT_LT(sets.train.first_sample + sets.train.size() * 100 - 1, sets.test.first_sample);
  EXPECT_EQ(sets.train.split, SplitTag::Train);
  EXPECT_EQ(sets.test.split, SplitTag::Test);
}

TEST(WindowAndSplit, LabelsComeFromTheFinalInstant) {
  Rng rng(9);
  const auto s = random_series(1300, 3, rng);
  const std::vector<double> th(3, 10.0);
  const Tensor labels = make_labels(s, th);
  const auto sets = window_and_split(s, labels, 25, 1000, 300);
  for (const auto* d : {&sets.train, &sets.test}) {
    for (std::size_t i = 0; i < d->size(); ++i) {
      const std::size_t end = d->first_sample + (i + 1) * 25 - 1;
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(d->labels.at(i, k), s.appliance_power[k][end] > 10.0 ? 1.0 : 0.0);
      }
      EXPECT_DOUBLE_EQ(d->windows.at(i, 24), d->norm.apply(s.aggregate[end]));
    }
  }
  EXPECT_EQ(sets.train.norm.min, sets.test.norm.min);
  EXPECT_EQ(sets.train.norm.max, sets.test.norm.max);
}

TEST(WindowAndSplit, RejectsTooShortSeries) {
  Rng rng(10);
  const auto s = random_series(500, 1, rng);
  const std::vector<double> th(1, 10.0);
  EXPECT_THROW(window_and_split(s, make_labels(s, th), 100, 400, 200), ArgumentError);
  EXPECT_THROW(window_and_split(s, make_labels(s, th), 100, 50, 50), ArgumentError);
}

// ---------------------------------------------------------------------------

TEST(Noise, VarianceFollowsTheRequestedSnr) {
  Rng rng(11);
  const Tensor clean = Tensor::full({200, 100}, 1.0);  // signal power 1
  const Tensor noisy = inject_noise(clean, 20.0, rng);
  double sq = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) sq += (noisy[i] - 1.0) * (noisy[i] - 1.0);
  EXPECT_NEAR(sq / static_cast<double>(clean.size()), 0.01, 0.0005);
}

TEST(Noise, VanishesAtVeryHighSnr) {
  Rng rng(12), r2(13);
  Tensor clean({10, 10});
  for (auto& v : clean.data()) v = r2.uniform();
  EXPECT_LE(max_abs_diff(inject_noise(clean, 300.0, rng), clean), 1e-9);
}

TEST(Noise, MeasuredSnrIsCalibrated) {
  for (double snr : {20.0, 30.0, 40.0}) {
    Rng rng(14), data_rng(15);
    Tensor clean({1, 10000});
    for (auto& v : clean.data()) v = data_rng.uniform();
    EXPECT_NEAR(measured_snr_db(clean, inject_noise(clean, snr, rng)), snr, 0.5);
  }
}

TEST(Noise, ZeroPowerSignalIsRejected) {
  Rng rng(16);
  EXPECT_THROW(inject_noise(Tensor({2, 5}), 20.0, rng), ArgumentError);
}

TEST(Noise, WithNoiseKeepsLabels) {
  Rng rng(17), r2(18);
  const auto s = random_series(400, 2, r2);
  const std::vector<double> th(2, 10.0);
  const auto sets = window_and_split(s, make_labels(s, th), 16, 320, 80);
  const auto noisy = with_noise(sets.test, 25.0, rng);
  EXPECT_EQ(noisy.labels, sets.test.labels);
  EXPECT_FALSE(noisy.windows == sets.test.windows);
}

// ---------------------------------------------------------------------------

TEST(Archive, RoundTrip) {
  const auto spec = parse_synthetic_spec(kFourAppliances);
  Rng rng(19);
  auto series = generate_synthetic(spec, 2000, rng);
  const std::vector<double> th(4, kDefaultOnThresholdWatts);
  auto labels = make_labels(series, th);
  const auto archive = make_archive(series, labels, 25, 1500, 500, "exclusive");
  const auto dir = scratch("roundtrip");
  write_archive(dir, archive);
  for (const char* f : {"data.csv", "labels.csv", "norm.json", "meta.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto back = read_archive(dir);
  EXPECT_EQ(back.labels, archive.labels);
  EXPECT_EQ(back.series.aggregate, archive.series.aggregate);
  EXPECT_EQ(back.norm.min, archive.norm.min);
  EXPECT_EQ(back.norm.max, archive.norm.max);
  EXPECT_EQ(back.window_len, 25u);
  EXPECT_EQ(back.train_len, 1500u);
  EXPECT_EQ(back.test_len, 500u);
  EXPECT_EQ(back.mode, "exclusive");
  EXPECT_EQ(back.split().test.windows, archive.split().test.windows);
  fs::remove_all(dir);
}

TEST(Archive, SameSeedGivesByteIdenticalFiles) {
  const auto spec = parse_synthetic_spec(kFourAppliances);
  const auto a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b}) {
    Rng rng(20);
    auto series = generate_synthetic(spec, 3000, rng);
    const std::vector<double> th(4, kDefaultOnThresholdWatts);
    auto labels = make_labels(series, th);
    write_archive(dir, make_archive(series, labels, 100, 2000, 1000, "exclusive"));
  }
  for (const char* f : {"data.csv", "labels.csv", "norm.json", "meta.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

}  // namespace
}  // namespace nilm
