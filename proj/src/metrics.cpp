#include "serkit/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "serkit/errors.hpp"

namespace ser {

std::string label_name(Label label) {
  const int i = static_cast<int>(label);
  if (i < 0 || i >= kNumClasses) {
    throw LabelError("label id " + std::to_string(i) + " outside the class set");
  }
  return std::string(kLabelNames[static_cast<size_t>(i)]);
}

Label label_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (name == kLabelNames[static_cast<size_t>(i)]) {
      return static_cast<Label>(i);
    }
  }
  throw LabelError("unknown label '" + std::string(name) + "'");
}

int64_t ConfusionMatrix::total() const {
  int64_t n = 0;
  for (const auto& row : counts) {
    for (int64_t v : row) {
      n += v;
    }
  }
  return n;
}

void ConfusionMatrix::add(Label truth, Label predicted) {
  const int t = static_cast<int>(truth);
  const int p = static_cast<int>(predicted);
  if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses) {
    throw LabelError("confusion matrix index outside the class set");
  }
  ++counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
}

ConfusionMatrix confusion_matrix(std::span<const Label> truth,
                                 std::span<const Label> predicted) {
  if (truth.size() != predicted.size()) {
    throw InputError("confusion_matrix: " + std::to_string(truth.size()) +
                     " truths vs " + std::to_string(predicted.size()) +
                     " predictions");
  }
  if (truth.empty()) {
    throw InputError("confusion_matrix: no samples");
  }
  ConfusionMatrix cm;
  for (size_t i = 0; i < truth.size(); ++i) {
    cm.add(truth[i], predicted[i]);
  }
  return cm;
}

F1Report f1_from_confusion(const ConfusionMatrix& cm) {
  F1Report report;
  double f1_sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto uc = static_cast<size_t>(c);
    int64_t tp = cm.counts[uc][uc];
    int64_t true_total = 0, pred_total = 0;
    for (size_t k = 0; k < kNumClasses; ++k) {
      true_total += cm.counts[uc][k];
      pred_total += cm.counts[k][uc];
    }
    const double precision =
        pred_total > 0 ? static_cast<double>(tp) / static_cast<double>(pred_total) : 0.0;
    const double recall =
        true_total > 0 ? static_cast<double>(tp) / static_cast<double>(true_total) : 0.0;
    const double f1 = precision + recall > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    report.precision[uc] = precision;
    report.recall[uc] = recall;
    report.f1[uc] = f1;
    f1_sum += f1;
  }
  report.macro_f1 = f1_sum / kNumClasses;
  return report;
}

std::pair<double, double> aggregate_runs(std::span<const double> values) {
  if (values.empty()) {
    throw InputError("aggregate_runs: no values");
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) {
    return {mean, 0.0};
  }
  double sq = 0.0;
  for (double v : values) {
    sq += (v - mean) * (v - mean);
  }
  return {mean, std::sqrt(sq / static_cast<double>(values.size() - 1))};
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", mean, stddev);
  return buf;
}

}  // namespace ser
