// SPDX-License-Identifier: Apache-2.0
#include "nilm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "nilm/text.hpp"

namespace nilm {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

void RawMeterSeries::validate() const {
  const std::size_t n = timestamps.size();
  if (aggregate.size() != n) throw ArgumentError("series: aggregate length differs from timestamps");
  if (appliance_power.size() != appliance_names.size()) {
    throw ArgumentError("series: appliance names and channels disagree");
  }
  for (std::size_t k = 0; k < appliance_power.size(); ++k) {
    if (appliance_power[k].size() != n) {
      throw ArgumentError("series: appliance '" + appliance_names[k] + "' length differs from timestamps");
    }
    if (std::any_of(appliance_power[k].begin(), appliance_power[k].end(), [](double w) { return !(w >= 0.0); })) {
      throw ArgumentError("series: appliance '" + appliance_names[k] + "' has negative power");
    }
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (timestamps[i] <= timestamps[i - 1]) throw ArgumentError("series: timestamps not strictly increasing");
  }
  if (std::any_of(aggregate.begin(), aggregate.end(), [](double w) { return !(w >= 0.0); })) {
    throw ArgumentError("series: aggregate has negative power");
  }
}

RawMeterSeries parse_csv(const std::string& text, const std::string& source) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw ParseError(source, 1, "empty file, expected header 'timestamp,aggregate,...'");
  auto header = split(lines[0], ',');
  for (auto& h : header) h = std::string(trim(h));
  if (header.empty() || header[0] != "timestamp") throw ParseError(source, 1, "missing column 'timestamp'");
  if (header.size() < 2 || header[1] != "aggregate") throw ParseError(source, 1, "missing column 'aggregate'");

  RawMeterSeries s;
  s.appliance_names.assign(header.begin() + 2, header.end());
  for (const auto& name : s.appliance_names) {
    if (name.empty()) throw ParseError(source, 1, "empty appliance column name");
  }
  s.appliance_power.resize(s.appliance_names.size());

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::size_t lineno = ln + 1;
    if (trim(lines[ln]).empty()) continue;
    const auto fields = split(lines[ln], ',');
    if (fields.size() != header.size()) {
      throw ParseError(source, lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                           std::to_string(fields.size()));
    }
    const auto ts = parse_int(fields[0]);
    if (!ts) throw ParseError(source, lineno, "timestamp '" + fields[0] + "' is not an integer");
    if (!s.timestamps.empty() && *ts <= s.timestamps.back()) {
      throw ParseError(source, lineno, "timestamp " + fields[0] + " is not after the previous row");
    }
    s.timestamps.push_back(*ts);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      const auto w = parse_double(fields[c]);
      if (!w) throw ParseError(source, lineno, "column '" + header[c] + "': '" + fields[c] + "' is not a number");
      if (*w < 0.0) throw ParseError(source, lineno, "column '" + header[c] + "': negative power " + fields[c]);
      if (c == 1) s.aggregate.push_back(*w);
      else s.appliance_power[c - 2].push_back(*w);
    }
  }
  return s;
}

RawMeterSeries load_csv(const std::filesystem::path& path) { return parse_csv(read_file(path), path.string()); }

std::string format_csv(const RawMeterSeries& series) {
  series.validate();
  std::string out = "timestamp,aggregate";
  for (const auto& name : series.appliance_names) out += "," + name;
  out += '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    out += std::to_string(series.timestamps[i]);
    out += ',';
    out += format_double(series.aggregate[i]);
    for (const auto& channel : series.appliance_power) {
      out += ',';
      out += format_double(channel[i]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const RawMeterSeries& series) {
  write_file(path, format_csv(series));
}

// ---------------------------------------------------------------------------

void ApplianceSpec::validate() const {
  const std::string who = "appliance '" + name + "': ";
  if (name.empty() || name.find_first_of(", \t") != std::string::npos) {
    throw ArgumentError(who + "name must be non-empty without commas or spaces");
  }
  if (!(on_power_mean > 0.0)) throw ArgumentError(who + "on_power_mean must be positive");
  if (!(on_power_jitter >= 0.0)) throw ArgumentError(who + "on_power_jitter must be non-negative");
  if (!(duty_cycle >= 0.0 && duty_cycle <= 1.0)) throw ArgumentError(who + "duty_cycle must lie in [0, 1]");
  if (!(mean_on_duration >= 1.0) || !(mean_off_duration >= 1.0)) {
    throw ArgumentError(who + "mean durations must be at least 1 sample");
  }
  if (signature == SignatureShape::Cyclic && cycle_period < 2) {
    throw ArgumentError(who + "cyclic period must be at least 2 samples");
  }
}

void SyntheticSpec::validate() const {
  if (appliances.empty()) throw ArgumentError("synthetic spec needs at least one appliance");
  for (const auto& a : appliances) a.validate();
  if (!(baseline_watts >= 0.0)) throw ArgumentError("baseline_watts must be non-negative");
  if (sample_period <= 0) throw ArgumentError("sample_period must be positive");
}

SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& source) {
  SyntheticSpec spec;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::size_t lineno = ln + 1;
    std::string_view body = lines[ln];
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key = value");
    const std::string key(trim(body.substr(0, eq)));
    const std::string value(trim(body.substr(eq + 1)));

    auto real = [&]() {
      const auto v = parse_double(value);
      if (!v) throw ParseError(source, lineno, key + ": '" + value + "' is not a number");
      return *v;
    };
    auto current = [&]() -> ApplianceSpec& {
      if (spec.appliances.empty()) throw ParseError(source, lineno, key + " before any 'appliance =' line");
      return spec.appliances.back();
    };

    if (key == "appliance") {
      ApplianceSpec a;
      a.name = value;
      spec.appliances.push_back(a);
    } else if (key == "mode") {
      if (value == "exclusive") spec.exclusive = true;
      else if (value == "independent") spec.exclusive = false;
      else throw ParseError(source, lineno, "mode must be exclusive or independent");
    } else if (key == "baseline_watts") {
      spec.baseline_watts = real();
    } else if (key == "start_timestamp") {
      const auto v = parse_int(value);
      if (!v) throw ParseError(source, lineno, "start_timestamp must be an integer");
      spec.start_timestamp = *v;
    } else if (key == "sample_period") {
      const auto v = parse_int(value);
      if (!v || *v <= 0) throw ParseError(source, lineno, "sample_period must be a positive integer");
      spec.sample_period = *v;
    } else if (key == "on_power_mean") {
      current().on_power_mean = real();
    } else if (key == "on_power_jitter") {
      current().on_power_jitter = real();
    } else if (key == "duty_cycle") {
      current().duty_cycle = real();
    } else if (key == "mean_on_duration") {
      current().mean_on_duration = real();
    } else if (key == "mean_off_duration") {
      current().mean_off_duration = real();
    } else if (key == "signature") {
      auto& a = current();
      if (value == "flat") a.signature = SignatureShape::Flat;
      else if (value == "ramp") a.signature = SignatureShape::Ramp;
      else if (value.rfind("cyclic:", 0) == 0) {
        const auto period = parse_uint(value.substr(7));
        if (!period) throw ParseError(source, lineno, "cyclic signature needs an integer period, e.g. cyclic:20");
        a.signature = SignatureShape::Cyclic;
        a.cycle_period = static_cast<std::size_t>(*period);
      } else {
        throw ParseError(source, lineno, "signature must be flat, ramp or cyclic:<period>");
      }
    } else {
      throw ParseError(source, lineno, "unknown key '" + key + "'");
    }

    try {
      if (!spec.appliances.empty()) spec.appliances.back().validate();
    } catch (const ArgumentError& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  try {
    spec.validate();
  } catch (const ArgumentError& e) {
    throw ParseError(source, lines.size(), e.what());
  }
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_spec(read_file(path), path.string());
}

namespace {

constexpr std::size_t kRampSamples = 10;

// Geometric bout length on {1, 2, ...} with the given mean.
std::size_t bout_length(Rng& rng, double mean) {
  if (mean <= 1.0) return 1;
  const double p = 1.0 / mean;
  const double u = 1.0 - rng.uniform();  // (0, 1]
  return 1 + static_cast<std::size_t>(std::floor(std::log(u) / std::log1p(-p)));
}

double shape_factor(const ApplianceSpec& a, std::size_t offset) {
  switch (a.signature) {
    case SignatureShape::Flat: return 1.0;
    case SignatureShape::Ramp:
      return std::min(1.0, 0.5 + 0.5 * static_cast<double>(offset) / static_cast<double>(kRampSamples));
    case SignatureShape::Cyclic:
      return 1.0 + 0.2 * std::sin(2.0 * std::numbers::pi * static_cast<double>(offset) /
                                  static_cast<double>(a.cycle_period));
  }
  return 1.0;
}

double on_power(const ApplianceSpec& a, std::size_t offset, Rng& rng) {
  const double jitter = a.on_power_jitter > 0.0 ? rng.normal(0.0, a.on_power_jitter) : 0.0;
  return std::max(0.0, a.on_power_mean * shape_factor(a, offset) + jitter);
}

}  // namespace

RawMeterSeries generate_synthetic(const SyntheticSpec& spec, std::size_t length, Rng& rng) {
  spec.validate();
  if (length == 0) throw ArgumentError("generate_synthetic: length must be at least 1");
  const std::size_t k_count = spec.appliances.size();

  RawMeterSeries s;
  s.timestamps.resize(length);
  for (std::size_t t = 0; t < length; ++t) {
    s.timestamps[t] = spec.start_timestamp + static_cast<std::int64_t>(t) * spec.sample_period;
  }
  for (const auto& a : spec.appliances) s.appliance_names.push_back(a.name);
  s.appliance_power.assign(k_count, std::vector<double>(length, 0.0));

  if (spec.exclusive) {
    double total_duty = 0.0;
    for (const auto& a : spec.appliances) total_duty += a.duty_cycle;
    std::size_t t = 0;
    while (total_duty > 0.0 && t < length) {
      double pick = rng.uniform() * total_duty;
      std::size_t k = 0;
      for (; k + 1 < k_count; ++k) {
        if (spec.appliances[k].duty_cycle > 0.0 && pick < spec.appliances[k].duty_cycle) break;
        pick -= spec.appliances[k].duty_cycle;
      }
      while (spec.appliances[k].duty_cycle == 0.0) --k;  // rounding fell past the last eligible one
      const auto& a = spec.appliances[k];
      const std::size_t len = bout_length(rng, a.mean_on_duration);
      for (std::size_t off = 0; off < len && t < length; ++off, ++t) s.appliance_power[k][t] = on_power(a, off, rng);
    }
  } else {
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto& a = spec.appliances[k];
      if (a.duty_cycle == 0.0) continue;
      if (a.duty_cycle == 1.0) {
        for (std::size_t t = 0; t < length; ++t) s.appliance_power[k][t] = on_power(a, t, rng);
        continue;
      }
      bool on = rng.uniform() < a.duty_cycle;
      std::size_t t = 0;
      while (t < length) {
        const std::size_t len = bout_length(rng, on ? a.mean_on_duration : a.mean_off_duration);
        for (std::size_t off = 0; off < len && t < length; ++off, ++t) {
          if (on) s.appliance_power[k][t] = on_power(a, off, rng);
        }
        on = !on;
      }
    }
  }

  s.aggregate.assign(length, spec.baseline_watts);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t t = 0; t < length; ++t) s.aggregate[t] += s.appliance_power[k][t];
  }
  return s;
}

// ---------------------------------------------------------------------------

Tensor make_labels(const RawMeterSeries& series, std::span<const double> thresholds) {
  const std::size_t k_count = series.appliance_count(), n = series.size();
  if (thresholds.size() != k_count) {
    throw ArgumentError("make_labels: " + std::to_string(thresholds.size()) + " thresholds for " +
                        std::to_string(k_count) + " appliances");
  }
  for (double th : thresholds) {
    if (!(th > 0.0)) throw ArgumentError("make_labels: thresholds must be positive");
  }
  if (n == 0 || k_count == 0) throw ArgumentError("make_labels: series has no samples or no appliances");
  std::vector<double> labels(n * k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t t = 0; t < n; ++t) labels[t * k_count + k] = series.appliance_power[k][t] > thresholds[k] ? 1.0 : 0.0;
  }
  return Tensor({n, k_count}, std::move(labels));
}

NormalizedPair normalize(std::span<const double> train, std::span<const double> test) {
  if (train.empty()) throw ArgumentError("normalize: training series is empty");
  const auto [lo, hi] = std::minmax_element(train.begin(), train.end());
  if (*hi == *lo) throw ArgumentError("normalize: constant training signal, max == min");
  NormalizedPair out;
  out.stats = {*lo, *hi};
  out.train.reserve(train.size());
  out.test.reserve(test.size());
  for (double x : train) out.train.push_back(out.stats.apply(x));
  for (double x : test) out.test.push_back(out.stats.apply(x));
  return out;
}

Tensor WindowDataset::window(std::size_t i) const {
  const std::size_t len = window_len();
  const auto v = windows.values().subspan(i * len, len);
  return Tensor({len}, std::vector<double>(v.begin(), v.end()));
}

Tensor WindowDataset::label(std::size_t i) const {
  const std::size_t k = appliance_count();
  const auto v = labels.values().subspan(i * k, k);
  return Tensor({k}, std::vector<double>(v.begin(), v.end()));
}

namespace {

WindowDataset cut_windows(std::span<const double> normalized, const Tensor& labels, std::size_t offset,
                          std::size_t window_len, NormStats stats, SplitTag tag) {
  const std::size_t count = normalized.size() / window_len;
  const std::size_t k_count = labels.dim(1);
  if (count == 0) {
    throw ArgumentError(std::string(tag == SplitTag::Train ? "train" : "test") +
                        " split shorter than one window of " + std::to_string(window_len));
  }
  std::vector<double> windows(normalized.begin(), normalized.begin() + static_cast<std::ptrdiff_t>(count * window_len));
  std::vector<double> window_labels(count * k_count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t last = offset + (w + 1) * window_len - 1;
    for (std::size_t k = 0; k < k_count; ++k) window_labels[w * k_count + k] = labels[last * k_count + k];
  }
  return {Tensor({count, window_len}, std::move(windows)), Tensor({count, k_count}, std::move(window_labels)), stats,
          tag, offset};
}

}  // namespace

SplitDatasets window_and_split(const RawMeterSeries& series, const Tensor& labels, std::size_t window_len,
                               std::size_t train_len, std::size_t test_len) {
  if (window_len == 0) throw ArgumentError("window_and_split: window length must be positive");
  if (series.size() < train_len + test_len) {
    throw ArgumentError("window_and_split: series has " + std::to_string(series.size()) +
                        " samples, needs at least " + std::to_string(train_len + test_len));
  }
  if (labels.rank() != 2 || labels.dim(0) != series.size()) {
    throw DimensionError("window_and_split: labels " + shape_to_string(labels.shape()) + " do not cover " +
                         std::to_string(series.size()) + " samples");
  }
  const std::span<const double> agg(series.aggregate);
  auto norm = normalize(agg.subspan(0, train_len), agg.subspan(train_len, test_len));
  SplitDatasets out;
  out.train = cut_windows(norm.train, labels, 0, window_len, norm.stats, SplitTag::Train);
  out.test = cut_windows(norm.test, labels, train_len, window_len, norm.stats, SplitTag::Test);
  return out;
}

Tensor inject_noise(const Tensor& windows, double snr_db, Rng& rng) {
  const double power = dot(windows.values(), windows.values()) / static_cast<double>(windows.size());
  if (!(power > 0.0)) throw ArgumentError("inject_noise: signal power is zero");
  const double variance = power / std::pow(10.0, snr_db / 10.0);
  const double sd = std::sqrt(variance);
  std::vector<double> noisy(windows.values().begin(), windows.values().end());
  for (auto& v : noisy) v += rng.normal(0.0, sd);
  return Tensor(windows.shape(), std::move(noisy));
}

WindowDataset with_noise(const WindowDataset& data, double snr_db, Rng& rng) {
  WindowDataset out = data;
  out.windows = inject_noise(data.windows, snr_db, rng);
  return out;
}

double measured_snr_db(const Tensor& clean, const Tensor& noisy) {
  require_same_shape(clean, noisy, "measured_snr_db");
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    signal += clean[i] * clean[i];
    const double e = noisy[i] - clean[i];
    noise += e * e;
  }
  return 10.0 * std::log10(signal / noise);
}

// ---------------------------------------------------------------------------

SplitDatasets DatasetArchive::split() const { return window_and_split(series, labels, window_len, train_len, test_len); }

DatasetArchive make_archive(RawMeterSeries series, Tensor labels, std::size_t window_len, std::size_t train_len,
                            std::size_t test_len, std::string mode) {
  series.validate();
  DatasetArchive a;
  a.series = std::move(series);
  a.labels = std::move(labels);
  a.window_len = window_len;
  a.train_len = train_len;
  a.test_len = test_len;
  a.mode = std::move(mode);
  a.norm = a.split().train.norm;
  return a;
}

void write_archive(const std::filesystem::path& dir, const DatasetArchive& archive) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "data.csv", archive.series);

  const std::size_t k_count = archive.labels.dim(1);
  std::string labels;
  for (std::size_t k = 0; k < k_count; ++k) labels += (k ? "," : "") + archive.series.appliance_names[k];
  labels += '\n';
  for (std::size_t t = 0; t < archive.labels.dim(0); ++t) {
    for (std::size_t k = 0; k < k_count; ++k) {
      if (k) labels += ',';
      labels += archive.labels[t * k_count + k] > 0.5 ? '1' : '0';
    }
    labels += '\n';
  }
  write_file(dir / "labels.csv", labels);

  nlohmann::ordered_json norm;
  norm["min"] = archive.norm.min;
  norm["max"] = archive.norm.max;
  write_file(dir / "norm.json", norm.dump(2) + "\n");

  nlohmann::ordered_json meta;
  meta["window_len"] = archive.window_len;
  meta["appliance_count"] = k_count;
  meta["appliances"] = archive.series.appliance_names;
  meta["mode"] = archive.mode;
  meta["train_len"] = archive.train_len;
  meta["test_len"] = archive.test_len;
  meta["train_range"] = {0, archive.train_len};
  meta["test_range"] = {archive.train_len, archive.train_len + archive.test_len};
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

DatasetArchive read_archive(const std::filesystem::path& dir) {
  DatasetArchive a;
  a.series = load_csv(dir / "data.csv");
  const std::string labels_path = (dir / "labels.csv").string();
  const auto lines = lines_of(read_file(dir / "labels.csv"));
  const std::size_t k_count = a.series.appliance_count();
  if (lines.empty() || split(lines[0], ',') != a.series.appliance_names) {
    throw ParseError(labels_path, 1, "label header does not match the appliance columns of data.csv");
  }
  std::vector<double> labels;
  labels.reserve(a.series.size() * k_count);
  std::size_t rows = 0;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const auto fields = split(lines[ln], ',');
    if (fields.size() != k_count) throw ParseError(labels_path, ln + 1, "expected " + std::to_string(k_count) + " labels");
    for (const auto& f : fields) {
      if (f != "0" && f != "1") throw ParseError(labels_path, ln + 1, "label '" + f + "' is not 0 or 1");
      labels.push_back(f == "1" ? 1.0 : 0.0);
    }
    ++rows;
  }
  if (rows != a.series.size()) {
    throw ParseError(labels_path, lines.size(), "has " + std::to_string(rows) + " rows, data.csv has " +
                                                    std::to_string(a.series.size()));
  }
  a.labels = Tensor({rows, k_count}, std::move(labels));

  try {
    const auto norm = nlohmann::json::parse(read_file(dir / "norm.json"));
    a.norm = {norm.at("min").get<double>(), norm.at("max").get<double>()};
    const auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
    a.window_len = meta.at("window_len").get<std::size_t>();
    a.train_len = meta.at("train_len").get<std::size_t>();
    a.test_len = meta.at("test_len").get<std::size_t>();
    a.mode = meta.value("mode", std::string("exclusive"));
    if (meta.at("appliance_count").get<std::size_t>() != k_count) {
      throw ParseError((dir / "meta.json").string(), 1, "appliance_count disagrees with data.csv");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "meta.json").string(), 1, e.what());
  }
  return a;
}

}  // namespace nilm
