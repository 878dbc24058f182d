#include "ipnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipnet {

ClsMetrics evaluate_classification(std::span<const double> scores,
                                   std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument(
        "evaluate_classification: scores/labels size mismatch or empty");
  }
  const int n = static_cast<int>(scores.size());

  ClsMetrics m;
  double ce = 0.0;
  int pos = 0;
  for (int i = 0; i < n; ++i) {
    const double p = std::clamp(scores[i], 1e-12, 1.0 - 1e-12);
    ce -= labels[i] ? std::log(p) : std::log(1.0 - p);
    pos += labels[i] ? 1 : 0;
  }
  m.ce = ce / n;
  const int neg = n - pos;
  if (pos == 0 || neg == 0) return m;  // undefined ranking metrics

  // Sort indices by score descending once; walk tie groups.
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });

  // AUC: pairwise wins with ties at 1/2. Per tie group with p positives and
  // g negatives: p * (negatives below the group) + p * g / 2. All terms are
  // dyadic integers/halves, so the sum is exact and matches a brute-force
  // pairwise count bit for bit.
  double wins = 0.0;
  // AUPRC: precision steps over descending distinct-score thresholds,
  // sum of (recall_k - recall_{k-1}) * precision_k.
  double auprc = 0.0;
  double recall_prev = 0.0;
  int tp = 0, fp = 0;

  int i = 0;
  while (i < n) {
    int j = i;
    int p_g = 0, n_g = 0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      if (labels[idx[j]]) ++p_g; else ++n_g;
      ++j;
    }
    tp += p_g;
    fp += n_g;
    const int neg_below = neg - fp;
    wins += static_cast<double>(p_g) * neg_below +
            0.5 * static_cast<double>(p_g) * n_g;
    const double recall = static_cast<double>(tp) / pos;
    const double precision = static_cast<double>(tp) / (tp + fp);
    auprc += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  m.auc = wins / (static_cast<double>(pos) * neg);
  m.auprc = auprc;
  return m;
}

RegMetrics evaluate_regression(std::span<const double> pred_log,
                               std::span<const double> target_log) {
  if (pred_log.size() != target_log.size() || pred_log.empty()) {
    throw std::invalid_argument(
        "evaluate_regression: size mismatch or empty input");
  }
  const int n = static_cast<int>(pred_log.size());

  std::vector<double> abs_days(n);
  for (int i = 0; i < n; ++i) {
    abs_days[i] = std::abs(std::exp(pred_log[i]) - std::exp(target_log[i]));
  }
  std::sort(abs_days.begin(), abs_days.end());
  RegMetrics m;
  m.medae_days = (n % 2 == 1)
                     ? abs_days[n / 2]
                     : 0.5 * (abs_days[n / 2 - 1] + abs_days[n / 2]);

  double mean_t = 0.0, mean_r = 0.0;
  for (int i = 0; i < n; ++i) {
    mean_t += target_log[i];
    mean_r += pred_log[i] - target_log[i];
  }
  mean_t /= n;
  mean_r /= n;
  double var_t = 0.0, var_r = 0.0;
  for (int i = 0; i < n; ++i) {
    const double dt = target_log[i] - mean_t;
    const double dr = (pred_log[i] - target_log[i]) - mean_r;
    var_t += dt * dt;
    var_r += dr * dr;
  }
  var_t /= n;
  var_r /= n;
  if (var_t == 0.0) {
    m.ev = var_r == 0.0 ? 1.0 : 0.0;
  } else {
    m.ev = 1.0 - var_r / var_t;
  }
  return m;
}

MetricSummary summarize(std::span<const double> fold_values) {
  MetricSummary s;
  if (fold_values.empty()) return s;
  const int n = static_cast<int>(fold_values.size());
  for (double v : fold_values) s.mean += v;
  s.mean /= n;
  double var = 0.0;
  for (double v : fold_values) {
    const double d = v - s.mean;
    var += d * d;
  }
  s.stdev = std::sqrt(var / n);
  return s;
}

}  // namespace ipnet
