#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "serkit/label.hpp"

namespace ser {

// counts[t][p] is the number of samples with true class t predicted as p.
struct ConfusionMatrix {
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

  int64_t total() const;
  void add(Label truth, Label predicted);
};

ConfusionMatrix confusion_matrix(std::span<const Label> truth,
                                 std::span<const Label> predicted);

// Per-class precision, recall and F1 plus their unweighted (macro) mean.
// A class with no predictions has precision 0, one with no true samples has
// recall 0, and F1 is 0 whenever precision + recall is 0; no NaNs escape.
struct F1Report {
  std::array<double, kNumClasses> precision{};
  std::array<double, kNumClasses> recall{};
  std::array<double, kNumClasses> f1{};
  double macro_f1 = 0.0;
};

F1Report f1_from_confusion(const ConfusionMatrix& cm);

// Mean and sample standard deviation (n-1 denominator, 0 for a single run).
std::pair<double, double> aggregate_runs(std::span<const double> values);

// "0.80±0.06" with two decimals, the table rendering of an aggregate.
std::string format_mean_std(double mean, double stddev);

}  // namespace ser
