#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "asymm/errors.hpp"

namespace asymm {

// Precision / recall / F1 at threshold 0.5. Degenerate cases use the
// P = 0 (no positive predictions) and F1 = 0 (P + R = 0) conventions.
struct predictor_metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mean = 0.0;  // mean / std of f1 across repeated runs
  double stddev = 0.0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline predictor_metrics compute_metrics(const std::vector<double>& predictions,
                                         const std::vector<int>& labels) {
  if (predictions.empty()) throw empty_input("compute_metrics: no predictions");
  if (predictions.size() != labels.size())
    throw dimension_mismatch("compute_metrics: prediction/label size mismatch");
  predictor_metrics m;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const bool pos = predictions[k] > 0.5;
    const bool truth = labels[k] != 0;
    if (pos && truth)
      ++m.tp;
    else if (pos && !truth)
      ++m.fp;
    else if (!pos && truth)
      ++m.fn;
    else
      ++m.tn;
  }
  m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
  m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.mean = m.f1;
  m.stddev = 0.0;
  return m;
}

struct metrics_report {
  std::map<std::string, predictor_metrics> per_predictor;
  double final_avg_violation = 0.0;
  double consensus_disagreement = 0.0;
  int completed_phases = 0;
};

inline void fold_repeat_f1(predictor_metrics& agg, const std::vector<double>& f1s) {
  if (f1s.empty()) return;
  double mean = 0.0;
  for (double v : f1s) mean += v;
  mean /= f1s.size();
  double var = 0.0;
  for (double v : f1s) var += (v - mean) * (v - mean);
  agg.mean = mean;
  agg.stddev = f1s.size() > 1 ? std::sqrt(var / (f1s.size() - 1)) : 0.0;
}

}  // namespace asymm
