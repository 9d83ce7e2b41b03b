#pragma once

#include <cstdint>
#include <vector>

#include "mind/types.hpp"

namespace mind {

struct MetricsReport {
  TaskKind task = TaskKind::Regression;
  std::size_t class_count = 0;
  std::size_t n = 0;

  // regression only
  double mae = 0;
  double corr = 0;
  bool corr_degenerate = false;  // zero variance; corr reported as 0
  double acc7 = 0;

  // binary view: for regression, scores binarized by sign with exact zeros
  // excluded from the true labels; for binary classification, the classes.
  double acc2 = 0;
  double f1 = 0;
  std::size_t acc2_support = 0;

  // classification only
  double accuracy = 0;
};

// Pearson correlation; writes *degenerate and returns 0 when either side
// has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* degenerate);

MetricsReport regression_metrics(const std::vector<double>& y_true,
                                 const std::vector<double>& y_pred);

MetricsReport classification_metrics(const std::vector<std::uint32_t>& y_true,
                                     const std::vector<std::uint32_t>& y_pred,
                                     std::size_t class_count);

}  // namespace mind
