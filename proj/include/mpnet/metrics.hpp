#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpnet/error.hpp"

// Classification metrics: confusion matrix, precision/recall/F1 (binary and
// macro), rank-statistic ROC/AUC, fold aggregation and report comparison.
// Undefined ratios (0/0) are reported as absent values, not as zeros.
namespace mpnet::metrics {

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<long>> counts;  // rows = true class, cols = predicted

  std::size_t size() const { return counts.size(); }
  long total() const {
    long t = 0;
    for (const auto& row : counts)
      for (long v : row) t += v;
    return t;
  }
  long trace() const {
    long t = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
    return t;
  }
};

inline ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                        int class_count,
                                        std::vector<std::string> class_names = {}) {
  if (truth.size() != predicted.size())
    throw ValueError("confusion_matrix: label lists differ in length");
  if (class_count < 1) throw ValueError("confusion_matrix: class_count must be >= 1");
  ConfusionMatrix cm;
  cm.counts.assign(static_cast<std::size_t>(class_count),
                   std::vector<long>(static_cast<std::size_t>(class_count), 0));
  if (class_names.empty()) {
    for (int c = 0; c < class_count; ++c) cm.classes.push_back("c" + std::to_string(c));
  } else {
    cm.classes = std::move(class_names);
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= class_count || p < 0 || p >= class_count)
      throw ValueError("confusion_matrix: label out of range [0," + std::to_string(class_count) + ")");
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total == 0) throw ValueError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

struct Prf1 {
  std::optional<double> precision, recall, f1;
};

inline std::optional<double> f1_score(std::optional<double> p, std::optional<double> r) {
  if (!p || !r || *p + *r == 0.0) return std::nullopt;
  return 2.0 * *p * *r / (*p + *r);
}

// One-vs-rest precision/recall/F1 for a single positive class.
inline Prf1 prf1(const ConfusionMatrix& cm, int positive_class) {
  const std::size_t k = static_cast<std::size_t>(positive_class);
  if (k >= cm.size()) throw ValueError("prf1: class index out of range");
  long tp = cm.counts[k][k], fp = 0, fn = 0;
  for (std::size_t i = 0; i < cm.size(); ++i) {
    if (i == k) continue;
    fp += cm.counts[i][k];
    fn += cm.counts[k][i];
  }
  Prf1 out;
  if (tp + fp > 0) out.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (tp + fn > 0) out.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.f1 = f1_score(out.precision, out.recall);
  return out;
}

// Macro average over classes; classes whose value is undefined drop out of
// that metric's average. All classes undefined -> absent.
inline Prf1 prf1_macro(const ConfusionMatrix& cm) {
  double psum = 0, rsum = 0, fsum = 0;
  std::size_t pn = 0, rn = 0, fn = 0;
  for (std::size_t k = 0; k < cm.size(); ++k) {
    Prf1 one = prf1(cm, static_cast<int>(k));
    if (one.precision) { psum += *one.precision; ++pn; }
    if (one.recall) { rsum += *one.recall; ++rn; }
    if (one.f1) { fsum += *one.f1; ++fn; }
  }
  Prf1 out;
  if (pn) out.precision = psum / static_cast<double>(pn);
  if (rn) out.recall = rsum / static_cast<double>(rn);
  if (fn) out.f1 = fsum / static_cast<double>(fn);
  return out;
}

struct RocPoint {
  double fpr, tpr;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> curve;
};

// AUC as the Mann-Whitney rank statistic: the probability that a random
// positive outranks a random negative, ties counted half. The curve sweeps a
// threshold over every distinct score, descending.
inline RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValueError("roc_auc: scores/labels length mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l != 0 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ValueError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups, 1-based
  double rank_sum_pos = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    i = j;
  }
  RocResult r;
  r.auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
          (static_cast<double>(n_pos) * static_cast<double>(n_neg));

  r.curve.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  for (std::size_t i = order.size(); i > 0;) {
    std::size_t j = i;
    while (j > 0 && scores[order[j - 1]] == scores[order[i - 1]]) --j;
    for (std::size_t k = j; k < i; ++k) (labels[order[k]] != 0 ? tp : fp)++;
    r.curve.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                       static_cast<double>(tp) / static_cast<double>(n_pos)});
    i = j;
  }
  return r;
}

// Macro one-vs-rest AUC over the classes present in labels.
inline double multiclass_auc(const std::vector<std::vector<double>>& probs,
                             std::span<const int> labels) {
  if (probs.size() != labels.size()) throw ValueError("multiclass_auc: probs/labels length mismatch");
  if (probs.empty()) throw ValueError("multiclass_auc: empty input");
  const std::size_t C = probs[0].size();
  std::vector<bool> present(C, false);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= C) throw ValueError("multiclass_auc: label out of range");
    present[static_cast<std::size_t>(l)] = true;
  }
  std::size_t present_count = 0;
  for (bool b : present) present_count += b ? 1 : 0;
  if (present_count < 2) throw ValueError("multiclass_auc: need at least 2 classes present");
  double sum = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    if (!present[c]) continue;  // absent classes are skipped
    std::vector<double> scores(labels.size());
    std::vector<int> binary(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = probs[i][c];
      binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
    }
    sum += roc_auc(scores, binary).auc;
  }
  return sum / static_cast<double>(present_count);
}

// ---- fold and run reports ----

struct FoldMetrics {
  std::optional<double> accuracy, precision, recall, f1, auc;
};

struct TrainingCurves {
  std::vector<double> train_loss, train_acc, val_loss, val_acc;
};

struct FoldReport {
  int fold = 0;
  FoldMetrics metrics;
  ConfusionMatrix confusion;
  std::vector<std::pair<std::string, std::vector<RocPoint>>> roc;  // class -> curve
  TrainingCurves curves;
};

struct RunReport {
  std::string dataset;
  std::string model;
  std::string averaging = "macro";
  std::string config_json;  // serialized configuration snapshot
  std::vector<FoldReport> folds;
  FoldMetrics aggregate;
};

// Arithmetic mean of the fold metrics that are present.
inline FoldMetrics aggregate_folds(const std::vector<FoldReport>& folds) {
  auto mean_of = [&](auto getter) -> std::optional<double> {
    double sum = 0.0;
    std::size_t n = 0;
    for (const FoldReport& f : folds) {
      if (auto v = getter(f.metrics)) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
  };
  FoldMetrics out;
  out.accuracy = mean_of([](const FoldMetrics& m) { return m.accuracy; });
  out.precision = mean_of([](const FoldMetrics& m) { return m.precision; });
  out.recall = mean_of([](const FoldMetrics& m) { return m.recall; });
  out.f1 = mean_of([](const FoldMetrics& m) { return m.f1; });
  out.auc = mean_of([](const FoldMetrics& m) { return m.auc; });
  return out;
}

// ---- cross-run comparison (percent units) ----

struct MetricRow {
  std::optional<double> accuracy, precision, recall, f1, auc;  // percentages
};

struct MetricTable {
  std::string label;
  std::vector<std::pair<std::string, MetricRow>> rows;  // dataset -> metrics

  const MetricRow* find(const std::string& dataset) const {
    for (const auto& [name, row] : rows)
      if (name == dataset) return &row;
    return nullptr;
  }
};

inline MetricTable table_from_report(const RunReport& report) {
  MetricTable t;
  t.label = report.model;
  MetricRow row;
  auto pct = [](std::optional<double> v) -> std::optional<double> {
    if (!v) return std::nullopt;
    return *v * 100.0;
  };
  row.accuracy = pct(report.aggregate.accuracy);
  row.precision = pct(report.aggregate.precision);
  row.recall = pct(report.aggregate.recall);
  row.f1 = pct(report.aggregate.f1);
  row.auc = pct(report.aggregate.auc);
  t.rows.emplace_back(report.dataset, row);
  return t;
}

struct CompareResult {
  std::vector<std::pair<std::string, double>> accuracy_delta_pp;  // a - b
  double mean_accuracy_delta_pp = 0.0;
};

// Per-dataset accuracy deltas in percentage points and their mean.
inline CompareResult compare_reports(const MetricTable& a, const MetricTable& b) {
  if (a.rows.empty()) throw ValueError("compare_reports: empty tables");
  if (a.rows.size() != b.rows.size())
    throw ValueError("compare_reports: dataset lists differ (" + std::to_string(a.rows.size()) +
                     " vs " + std::to_string(b.rows.size()) + ")");
  CompareResult out;
  double sum = 0.0;
  for (const auto& [dataset, row_a] : a.rows) {
    const MetricRow* row_b = b.find(dataset);
    if (!row_b) throw ValueError("compare_reports: dataset " + dataset + " missing from " + b.label);
    if (!row_a.accuracy || !row_b->accuracy)
      throw ValueError("compare_reports: accuracy missing for " + dataset);
    const double d = *row_a.accuracy - *row_b->accuracy;
    out.accuracy_delta_pp.emplace_back(dataset, d);
    sum += d;
  }
  out.mean_accuracy_delta_pp = sum / static_cast<double>(out.accuracy_delta_pp.size());
  return out;
}

}  // namespace mpnet::metrics
