// SPDX-License-Identifier: Apache-2.0
#include "nilm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nilm/text.hpp"

namespace nilm {

namespace {

void check_binary(const Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (v != 0.0 && v != 1.0) throw ArgumentError(std::string(what) + " must contain only 0 and 1");
  }
}

}  // namespace

std::vector<ConfusionCounts> confusion_per_appliance(const Tensor& predictions, const Tensor& truth) {
  require_same_shape(predictions, truth, "confusion");
  if (predictions.rank() != 2) throw DimensionError("confusion: expected N x K matrices");
  check_binary(predictions, "predictions");
  check_binary(truth, "truth");
  const std::size_t n = predictions.dim(0), k_count = predictions.dim(1);
  std::vector<ConfusionCounts> per(k_count);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < k_count; ++k) {
      const bool p = predictions[i * k_count + k] == 1.0;
      const bool t = truth[i * k_count + k] == 1.0;
      auto& c = per[k];
      if (p && t) ++c.tp;
      else if (p) ++c.fp;
      else if (t) ++c.fn;
      else ++c.tn;
    }
  }
  return per;
}

ConfusionCounts confusion(const Tensor& predictions, const Tensor& truth) {
  ConfusionCounts total;
  for (const auto& c : confusion_per_appliance(predictions, truth)) total += c;
  return total;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw ArgumentError("accuracy: empty evaluation, no decisions were scored");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

PrecisionRecall precision_recall(const ConfusionCounts& c) {
  PrecisionRecall pr;
  if (c.tp + c.fp == 0) pr.precision = {0.0, true};
  else pr.precision.value = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn == 0) pr.recall = {0.0, true};
  else pr.recall.value = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return pr;
}

FlaggedValue f1(double precision, double recall) {
  if (precision + recall == 0.0) return {0.0, true};
  return {2.0 * precision * recall / (precision + recall), false};
}

FlaggedValue mcc(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn),
               tn = static_cast<double>(c.tn);
  const double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a == 0.0 || b == 0.0 || d == 0.0 || e == 0.0) return {0.0, true};
  const double value = (tp * tn - fp * fn) / (std::sqrt(a * b) * std::sqrt(d * e));
  return {std::clamp(value, -1.0, 1.0), false};
}

MetricsReport make_report(const ConfusionCounts& counts) {
  MetricsReport r;
  r.counts = counts;
  r.acc = accuracy(counts);
  const auto pr = precision_recall(counts);
  r.precision = pr.precision.value;
  r.recall = pr.recall.value;
  if (pr.precision.undefined) r.undefined.insert("precision");
  if (pr.recall.undefined) r.undefined.insert("recall");
  const auto f = f1(r.precision, r.recall);
  r.f1 = f.value;
  if (f.undefined) r.undefined.insert("f1");
  const auto m = mcc(counts);
  r.mcc = m.value;
  if (m.undefined) r.undefined.insert("mcc");
  return r;
}

MetricsReport evaluate_predictions(const Tensor& predictions, const Tensor& truth) {
  MetricsReport r = make_report(confusion(predictions, truth));
  const std::size_t n = truth.dim(0), k_count = truth.dim(1);
  std::size_t exact = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool same = true;
    for (std::size_t k = 0; k < k_count && same; ++k) same = predictions[i * k_count + k] == truth[i * k_count + k];
    exact += same ? 1 : 0;
  }
  r.exact_match = static_cast<double>(exact) / static_cast<double>(n);
  return r;
}

MetricsReport evaluate(const Predictor& predict, const WindowDataset& data) {
  if (data.size() == 0) throw ArgumentError("evaluate: dataset is empty");
  const std::size_t n = data.size(), k_count = data.appliance_count();
  std::vector<double> predictions;
  predictions.reserve(n * k_count);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor p = predict(data.window(i));
    if (p.size() != k_count) {
      throw DimensionError("evaluate: predictor returned " + std::to_string(p.size()) + " states, dataset has " +
                           std::to_string(k_count) + " appliances");
    }
    predictions.insert(predictions.end(), p.values().begin(), p.values().end());
  }
  return evaluate_predictions(Tensor({n, k_count}, std::move(predictions)), data.labels);
}

MetricsReport evaluate(const HybridParams& model, const WindowDataset& data) {
  if (model.config.appliance_count != data.appliance_count() || model.config.window_len != data.window_len()) {
    throw ConfigError("evaluate: model expects K=" + std::to_string(model.config.appliance_count) + ", L=" +
                      std::to_string(model.config.window_len) + " but dataset has K=" +
                      std::to_string(data.appliance_count()) + ", L=" + std::to_string(data.window_len()));
  }
  return evaluate([&](const Tensor& w) { return predict_states(model, w); }, data);
}

Tensor predict_all(const HybridParams& model, const WindowDataset& data) {
  const std::size_t n = data.size(), k_count = model.config.appliance_count;
  std::vector<double> out;
  out.reserve(n * k_count);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor p = predict_states(model, data.window(i));
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor({n, k_count}, std::move(out));
}

std::string MetricsReport::to_kv() const {
  std::ostringstream out;
  out << "tp=" << counts.tp << "\nfp=" << counts.fp << "\nfn=" << counts.fn << "\ntn=" << counts.tn
      << "\nacc=" << format_double(acc) << "\nprecision=" << format_double(precision)
      << "\nrecall=" << format_double(recall) << "\nf1=" << format_double(f1) << "\nmcc=" << format_double(mcc)
      << "\nexact_match=" << format_double(exact_match) << "\nundefined=";
  bool first = true;
  for (const auto& name : undefined) {
    out << (first ? "" : ",") << name;
    first = false;
  }
  out << '\n';
  return out.str();
}

std::string MetricsReport::csv_header() { return "tp,fp,fn,tn,acc,precision,recall,f1,mcc,exact_match,undefined"; }

std::string MetricsReport::csv_row() const {
  std::string flags;
  for (const auto& name : undefined) flags += (flags.empty() ? "" : ";") + name;
  return std::to_string(counts.tp) + "," + std::to_string(counts.fp) + "," + std::to_string(counts.fn) + "," +
         std::to_string(counts.tn) + "," + format_double(acc) + "," + format_double(precision) + "," +
         format_double(recall) + "," + format_double(f1) + "," + format_double(mcc) + "," +
         format_double(exact_match) + "," + flags;
}

}  // namespace nilm
