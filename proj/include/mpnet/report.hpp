#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpnet/error.hpp"
#include "mpnet/metrics.hpp"
#include "mpnet/svg.hpp"

// Run-report persistence: the report JSON document, the curves/roc/confusion
// CSV files and the four SVG panels. All writes go through a temp file and an
// atomic rename.
namespace mpnet::report {

inline constexpr const char* kSchema = "mpnet-report-v1";

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

inline std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json metrics_json(const metrics::FoldMetrics& m) {
  nlohmann::json j;
  j["accuracy"] = opt_json(m.accuracy);
  j["precision"] = opt_json(m.precision);
  j["recall"] = opt_json(m.recall);
  j["f1"] = opt_json(m.f1);
  j["auc"] = opt_json(m.auc);
  return j;
}

inline metrics::FoldMetrics metrics_from(const nlohmann::json& j) {
  metrics::FoldMetrics m;
  m.accuracy = opt_from(j.at("accuracy"));
  m.precision = opt_from(j.at("precision"));
  m.recall = opt_from(j.at("recall"));
  m.f1 = opt_from(j.at("f1"));
  m.auc = opt_from(j.at("auc"));
  return m;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
    os << text;
    if (!os) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Trapezoid integral of a stored ROC curve; with half-weight ties this equals
// the rank-statistic AUC.
inline double curve_auc(const std::vector<metrics::RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  return area;
}

}  // namespace detail

inline nlohmann::json to_json(const metrics::RunReport& report, const std::string& timestamp) {
  nlohmann::json j;
  j["schema"] = kSchema;
  j["dataset"] = report.dataset;
  j["model"] = report.model;
  j["averaging"] = report.averaging;
  j["timestamp"] = timestamp;
  if (!report.config_json.empty()) j["config"] = nlohmann::json::parse(report.config_json);
  j["folds"] = nlohmann::json::array();
  for (const metrics::FoldReport& f : report.folds) {
    nlohmann::json jf;
    jf["fold"] = f.fold;
    jf["metrics"] = detail::metrics_json(f.metrics);
    jf["confusion"]["classes"] = f.confusion.classes;
    jf["confusion"]["counts"] = f.confusion.counts;
    nlohmann::json roc = nlohmann::json::object();
    for (const auto& [cls, curve] : f.roc) {
      nlohmann::json points = nlohmann::json::array();
      for (const metrics::RocPoint& p : curve) points.push_back({p.fpr, p.tpr});
      roc[cls] = points;
    }
    jf["roc"] = roc;
    jf["curves"]["train_loss"] = f.curves.train_loss;
    jf["curves"]["train_acc"] = f.curves.train_acc;
    jf["curves"]["val_loss"] = f.curves.val_loss;
    jf["curves"]["val_acc"] = f.curves.val_acc;
    j["folds"].push_back(jf);
  }
  j["aggregate"] = detail::metrics_json(report.aggregate);
  return j;
}

// Parses a report document and re-checks that the stored metrics are
// derivable from the stored confusion matrices and curves.
inline metrics::RunReport from_json(const nlohmann::json& j) {
  if (!j.contains("schema") || j.at("schema") != kSchema)
    throw DataError("report: unknown or missing schema");
  metrics::RunReport report;
  report.dataset = j.at("dataset").get<std::string>();
  report.model = j.at("model").get<std::string>();
  report.averaging = j.at("averaging").get<std::string>();
  if (j.contains("config")) report.config_json = j.at("config").dump();
  for (const nlohmann::json& jf : j.at("folds")) {
    metrics::FoldReport f;
    f.fold = jf.at("fold").get<int>();
    f.metrics = detail::metrics_from(jf.at("metrics"));
    f.confusion.classes = jf.at("confusion").at("classes").get<std::vector<std::string>>();
    f.confusion.counts = jf.at("confusion").at("counts").get<std::vector<std::vector<long>>>();
    for (const auto& [cls, points] : jf.at("roc").items()) {
      std::vector<metrics::RocPoint> curve;
      for (const auto& p : points) curve.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      f.roc.emplace_back(cls, std::move(curve));
    }
    f.curves.train_loss = jf.at("curves").at("train_loss").get<std::vector<double>>();
    f.curves.train_acc = jf.at("curves").at("train_acc").get<std::vector<double>>();
    f.curves.val_loss = jf.at("curves").at("val_loss").get<std::vector<double>>();
    f.curves.val_acc = jf.at("curves").at("val_acc").get<std::vector<double>>();

    if (f.metrics.accuracy) {
      const double recomputed = metrics::accuracy(f.confusion);
      if (std::abs(recomputed - *f.metrics.accuracy) > 1e-9)
        throw DataError("report: fold " + std::to_string(f.fold) +
                        " accuracy does not match its confusion matrix");
    }
    if (f.metrics.auc && !f.roc.empty() && f.confusion.classes.size() == 2) {
      const double recomputed = detail::curve_auc(f.roc.back().second);
      if (std::abs(recomputed - *f.metrics.auc) > 1e-9)
        throw DataError("report: fold " + std::to_string(f.fold) + " AUC does not match its ROC curve");
    }
    report.folds.push_back(std::move(f));
  }
  report.aggregate = detail::metrics_from(j.at("aggregate"));
  const metrics::FoldMetrics recomputed = metrics::aggregate_folds(report.folds);
  auto close = [](std::optional<double> a, std::optional<double> b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || std::abs(*a - *b) <= 1e-9;
  };
  if (!close(recomputed.accuracy, report.aggregate.accuracy) ||
      !close(recomputed.precision, report.aggregate.precision) ||
      !close(recomputed.recall, report.aggregate.recall) ||
      !close(recomputed.f1, report.aggregate.f1) || !close(recomputed.auc, report.aggregate.auc))
    throw DataError("report: aggregate metrics do not match the fold entries");
  return report;
}

inline metrics::RunReport load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open report " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

// ---- CSV emission (rectangular, with headers) ----

inline std::string curves_csv(const metrics::RunReport& report) {
  std::ostringstream os;
  os << "fold,epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const metrics::FoldReport& f : report.folds) {
    for (std::size_t e = 0; e < f.curves.train_loss.size(); ++e) {
      os << f.fold << "," << e << "," << f.curves.train_loss[e] << "," << f.curves.train_acc[e] << ",";
      if (e < f.curves.val_loss.size()) os << f.curves.val_loss[e];
      os << ",";
      if (e < f.curves.val_acc.size()) os << f.curves.val_acc[e];
      os << "\n";
    }
  }
  return os.str();
}

inline std::string roc_csv(const metrics::RunReport& report) {
  std::ostringstream os;
  os << "fold,class,fpr,tpr\n";
  for (const metrics::FoldReport& f : report.folds)
    for (const auto& [cls, curve] : f.roc)
      for (const metrics::RocPoint& p : curve)
        os << f.fold << "," << cls << "," << p.fpr << "," << p.tpr << "\n";
  return os.str();
}

inline std::string confusion_csv(const metrics::RunReport& report) {
  std::ostringstream os;
  os << "fold,true_class,predicted_class,count\n";
  for (const metrics::FoldReport& f : report.folds)
    for (std::size_t i = 0; i < f.confusion.size(); ++i)
      for (std::size_t p = 0; p < f.confusion.size(); ++p)
        os << f.fold << "," << f.confusion.classes[i] << "," << f.confusion.classes[p] << ","
           << f.confusion.counts[i][p] << "\n";
  return os.str();
}

// ---- SVG panels (accuracy, loss, ROC, confusion) ----

namespace detail {

inline std::vector<double> mean_curve(const metrics::RunReport& report,
                                      std::vector<double> metrics::TrainingCurves::*member) {
  std::vector<double> mean;
  for (const metrics::FoldReport& f : report.folds) {
    const std::vector<double>& c = f.curves.*member;
    if (c.size() > mean.size()) mean.resize(c.size(), 0.0);
  }
  if (mean.empty()) return mean;
  std::vector<std::size_t> counts(mean.size(), 0);
  for (const metrics::FoldReport& f : report.folds) {
    const std::vector<double>& c = f.curves.*member;
    for (std::size_t e = 0; e < c.size(); ++e) {
      mean[e] += c[e];
      ++counts[e];
    }
  }
  for (std::size_t e = 0; e < mean.size(); ++e)
    if (counts[e]) mean[e] /= static_cast<double>(counts[e]);
  return mean;
}

inline svg::Series curve_series(const std::vector<double>& values, const std::string& name,
                                const std::string& color, double opacity, bool in_legend) {
  svg::Series s;
  s.name = name;
  s.color = color;
  s.opacity = opacity;
  s.in_legend = in_legend;
  for (std::size_t e = 0; e < values.size(); ++e)
    s.points.emplace_back(static_cast<double>(e + 1), values[e]);
  return s;
}

}  // namespace detail

// Panel a/b: per-fold curves faint, fold mean bold.
inline std::string curves_svg(const metrics::RunReport& report, bool accuracy_panel) {
  std::vector<svg::Series> series;
  auto train_member = accuracy_panel ? &metrics::TrainingCurves::train_acc : &metrics::TrainingCurves::train_loss;
  auto val_member = accuracy_panel ? &metrics::TrainingCurves::val_acc : &metrics::TrainingCurves::val_loss;
  for (const metrics::FoldReport& f : report.folds) {
    series.push_back(detail::curve_series(f.curves.*train_member, "", svg::palette()[0], 0.25, false));
    series.push_back(detail::curve_series(f.curves.*val_member, "", svg::palette()[1], 0.25, false));
  }
  series.push_back(detail::curve_series(detail::mean_curve(report, train_member),
                                        accuracy_panel ? "train accuracy" : "train loss",
                                        svg::palette()[0], 1.0, true));
  series.push_back(detail::curve_series(detail::mean_curve(report, val_member),
                                        accuracy_panel ? "validation accuracy" : "validation loss",
                                        svg::palette()[1], 1.0, true));
  const std::string what = accuracy_panel ? "accuracy" : "loss";
  return svg::line_chart(report.model + " on " + report.dataset + ": " + what + " per epoch",
                         "epoch", what, std::move(series),
                         accuracy_panel ? std::optional<std::pair<double, double>>({0.0, 1.0})
                                        : std::nullopt);
}

// Panel c: per-class ROC curves of every fold.
inline std::string roc_svg(const metrics::RunReport& report) {
  std::vector<svg::Series> series;
  std::vector<std::string> seen;
  for (const metrics::FoldReport& f : report.folds) {
    for (std::size_t k = 0; k < f.roc.size(); ++k) {
      const auto& [cls, curve] = f.roc[k];
      std::size_t color_idx = 0;
      auto it = std::find(seen.begin(), seen.end(), cls);
      if (it == seen.end()) {
        seen.push_back(cls);
        color_idx = seen.size() - 1;
      } else {
        color_idx = static_cast<std::size_t>(it - seen.begin());
      }
      svg::Series s;
      s.name = cls;
      s.color = svg::palette()[color_idx % svg::palette().size()];
      s.opacity = 0.5;
      s.in_legend = &f == &report.folds.front();
      for (const metrics::RocPoint& p : curve) s.points.emplace_back(p.fpr, p.tpr);
      series.push_back(std::move(s));
    }
  }
  svg::Series diag;
  diag.name = "chance";
  diag.color = "#999999";
  diag.points = {{0.0, 0.0}, {1.0, 1.0}};
  diag.in_legend = true;
  series.push_back(std::move(diag));
  return svg::line_chart(report.model + " on " + report.dataset + ": ROC", "false positive rate",
                         "true positive rate", std::move(series),
                         std::optional<std::pair<double, double>>({0.0, 1.0}));
}

// Panel d: confusion counts summed over folds.
inline std::string confusion_svg(const metrics::RunReport& report) {
  if (report.folds.empty()) throw ValueError("confusion_svg: no folds");
  std::vector<std::string> classes = report.folds.front().confusion.classes;
  std::vector<std::vector<long>> total(classes.size(), std::vector<long>(classes.size(), 0));
  for (const metrics::FoldReport& f : report.folds)
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t p = 0; p < classes.size(); ++p) total[i][p] += f.confusion.counts[i][p];
  return svg::confusion_heatmap(report.model + " on " + report.dataset + ": confusion (all folds)",
                                classes, total);
}

// Writes report.json plus the CSV and SVG artifacts into out_dir.
inline void write_run_outputs(const std::filesystem::path& out_dir,
                              const metrics::RunReport& report, const std::string& timestamp) {
  std::filesystem::create_directories(out_dir);
  detail::write_text_atomic(out_dir / "report.json", to_json(report, timestamp).dump(2) + "\n");
  detail::write_text_atomic(out_dir / "curves.csv", curves_csv(report));
  detail::write_text_atomic(out_dir / "roc.csv", roc_csv(report));
  detail::write_text_atomic(out_dir / "confusion.csv", confusion_csv(report));
  detail::write_text_atomic(out_dir / "accuracy.svg", curves_svg(report, true));
  detail::write_text_atomic(out_dir / "loss.svg", curves_svg(report, false));
  detail::write_text_atomic(out_dir / "roc.svg", roc_svg(report));
  detail::write_text_atomic(out_dir / "confusion.svg", confusion_svg(report));
}

}  // namespace mpnet::report
