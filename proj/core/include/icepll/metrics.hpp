#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icepll/errors.hpp"

namespace icepll {

// Square count matrix, rows = true class, columns = predicted class.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::int64_t> counts;  // row-major

  explicit ConfusionMatrix(std::size_t l = 0) : num_classes(l), counts(l * l, 0) {}

  std::int64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * num_classes + pred]; }
  std::int64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
  std::int64_t total() const;
  std::int64_t row_sum(std::size_t truth) const;   // support of a class
  std::int64_t col_sum(std::size_t pred) const;    // predictions of a class

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

ConfusionMatrix confusion(const std::vector<std::size_t>& preds,
                          const std::vector<std::size_t>& truths, std::size_t num_classes);

// Accuracy, support-weighted precision/recall/F1, and per-class F1. Per-class
// ratios with a zero denominator evaluate to 0 rather than NaN.
struct MetricsReport {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<double> per_class_precision;
  std::vector<double> per_class_recall;
  std::vector<double> per_class_f1;
  std::vector<std::int64_t> support;
};

MetricsReport compute_metrics(const ConfusionMatrix& cm);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

// Aligned text table for terminal output.
std::string metrics_to_table(const MetricsReport& report);

// CSV with a header row naming classes in canonical order; rows are true
// classes, columns predicted.
std::string confusion_to_csv(const ConfusionMatrix& cm);

}  // namespace icepll
