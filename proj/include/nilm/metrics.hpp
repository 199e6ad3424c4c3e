// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "nilm/data.hpp"
#include "nilm/model.hpp"
#include "nilm/tensor.hpp"

namespace nilm {

/// Pooled binary decision counts; a positive is state 1.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Micro-aggregated over all N * K decisions.
ConfusionCounts confusion(const Tensor& predictions, const Tensor& truth);
/// One set of counts per column (appliance).
std::vector<ConfusionCounts> confusion_per_appliance(const Tensor& predictions, const Tensor& truth);

/// (TP + TN) / total. Throws ArgumentError when there are no decisions.
double accuracy(const ConfusionCounts& c);

/// A metric whose denominator vanished is reported as 0 with `undefined` set.
struct FlaggedValue {
  double value = 0.0;
  bool undefined = false;
};

struct PrecisionRecall {
  FlaggedValue precision;
  FlaggedValue recall;
};

PrecisionRecall precision_recall(const ConfusionCounts& c);
FlaggedValue f1(double precision, double recall);
/// (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)).
FlaggedValue mcc(const ConfusionCounts& c);

struct MetricsReport {
  ConfusionCounts counts;
  double acc = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  /// Fraction of samples whose whole state vector is right.
  double exact_match = 0.0;
  std::set<std::string> undefined;  // names of metrics with a zero denominator

  /// "key=value" lines.
  std::string to_kv() const;
  static std::string csv_header();
  std::string csv_row() const;
};

MetricsReport make_report(const ConfusionCounts& counts);
MetricsReport evaluate_predictions(const Tensor& predictions, const Tensor& truth);

using Predictor = std::function<Tensor(const Tensor& window)>;

/// Runs the predictor on every window and scores the stacked predictions.
MetricsReport evaluate(const Predictor& predict, const WindowDataset& data);
MetricsReport evaluate(const HybridParams& model, const WindowDataset& data);

/// N x K predictions for every window of the dataset.
Tensor predict_all(const HybridParams& model, const WindowDataset& data);

}  // namespace nilm
