#include "mind/metrics.hpp"

#include <cmath>

#include "mind/data.hpp"

namespace mind {

double pearson(const std::vector<double>& a, const std::vector<double>& b,
               bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (a.size() != b.size() || a.empty())
    throw ShapeError("pearson: vector lengths disagree or empty");
  double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return cov / std::sqrt(va * vb);
}

namespace {

struct BinaryF1 {
  double acc = 0;
  double f1 = 0;  // support-weighted over both classes
  std::size_t n = 0;
};

// weighted-average F1 over class labels in [0, k)
double weighted_f1(const std::vector<std::uint32_t>& y_true,
                   const std::vector<std::uint32_t>& y_pred, std::size_t k) {
  double total = static_cast<double>(y_true.size());
  double out = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      bool t = y_true[i] == c, p = y_pred[i] == c;
      if (t) support += 1;
      if (t && p) tp += 1;
      if (!t && p) fp += 1;
      if (t && !p) fn += 1;
    }
    double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    double f1 = precision + recall > 0
                    ? 2.0 * precision * recall / (precision + recall)
                    : 0.0;
    out += f1 * support / total;
  }
  return out;
}

BinaryF1 binary_stats(const std::vector<std::uint32_t>& y_true,
                      const std::vector<std::uint32_t>& y_pred) {
  BinaryF1 out;
  out.n = y_true.size();
  if (out.n == 0) return out;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++hits;
  out.acc = static_cast<double>(hits) / static_cast<double>(out.n);
  out.f1 = weighted_f1(y_true, y_pred, 2);
  return out;
}

}  // namespace

MetricsReport regression_metrics(const std::vector<double>& y_true,
                                 const std::vector<double>& y_pred) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ShapeError("regression_metrics: label/prediction length mismatch");
  MetricsReport r;
  r.task = TaskKind::Regression;
  r.n = y_true.size();
  double mae = 0;
  std::size_t acc7_hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    mae += std::abs(y_true[i] - y_pred[i]);
    if (label_to_class7(y_true[i]) == label_to_class7(y_pred[i])) ++acc7_hits;
  }
  r.mae = mae / static_cast<double>(r.n);
  r.acc7 = static_cast<double>(acc7_hits) / static_cast<double>(r.n);
  r.corr = pearson(y_true, y_pred, &r.corr_degenerate);

  // binary view: exact-zero true scores are excluded, positive class is > 0
  std::vector<std::uint32_t> bt, bp;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == 0.0) continue;
    bt.push_back(y_true[i] > 0.0 ? 1u : 0u);
    bp.push_back(y_pred[i] > 0.0 ? 1u : 0u);
  }
  BinaryF1 b = binary_stats(bt, bp);
  r.acc2 = b.acc;
  r.f1 = b.f1;
  r.acc2_support = b.n;
  return r;
}

MetricsReport classification_metrics(const std::vector<std::uint32_t>& y_true,
                                     const std::vector<std::uint32_t>& y_pred,
                                     std::size_t class_count) {
  if (y_true.size() != y_pred.size() || y_true.empty())
    throw ShapeError(
        "classification_metrics: label/prediction length mismatch");
  MetricsReport r;
  r.task = TaskKind::Classification;
  r.class_count = class_count;
  r.n = y_true.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    if (y_true[i] == y_pred[i]) ++hits;
  r.accuracy = static_cast<double>(hits) / static_cast<double>(r.n);
  r.f1 = weighted_f1(y_true, y_pred, class_count);
  if (class_count == 2) {
    r.acc2 = r.accuracy;
    r.acc2_support = r.n;
  }
  return r;
}

}  // namespace mind
