#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipnet/series.hpp"

namespace ipnet {

// auc/auprc are empty when the label set is single-class (undefined rather
// than a sentinel value); ce is always computed.
struct ClsMetrics {
  std::optional<double> auc;
  std::optional<double> auprc;
  double ce = 0.0;
};

struct RegMetrics {
  double medae_days = 0.0;  // median |exp(pred) - exp(target)|
  double ev = 0.0;          // 1 - Var(resid)/Var(target), log space
};

struct EvalReport {
  Task task = Task::classification;
  int fold = -1;
  int n_cases = 0;
  ClsMetrics cls;
  RegMetrics reg;
};

// Ranking quality of probability scores against binary labels.
// auc: probability a random positive outranks a random negative, ties 1/2.
// auprc: precision-recall area by steps over descending score thresholds.
// ce: mean binary cross-entropy with scores clamped to [1e-12, 1-1e-12].
ClsMetrics evaluate_classification(std::span<const double> scores,
                                   std::span<const int> labels);

// medae on exponentiated values (days); ev on the raw (log) values with
// population variances. Var(target) = 0 degenerates to ev = 1 when the
// residual variance is also 0, else 0.
RegMetrics evaluate_regression(std::span<const double> pred_log,
                               std::span<const double> target_log);

struct MetricSummary {
  double mean = 0.0;
  double stdev = 0.0;  // population std over folds
};

MetricSummary summarize(std::span<const double> fold_values);

}  // namespace ipnet
