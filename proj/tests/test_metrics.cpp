#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mpnet/metrics.hpp"
#include "mpnet/paper_tables.hpp"
#include "mpnet/rng.hpp"

using namespace mpnet;
using metrics::ConfusionMatrix;

namespace {

// O(n^2) pairwise counting, the AUC oracle: ties count half.
double auc_pairwise(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("confusion_matrix") {
  SECTION("all correct is diagonal") {
    std::vector<int> y{0, 1, 2, 1, 0};
    ConfusionMatrix cm = metrics::confusion_matrix(y, y, 3);
    CHECK(cm.trace() == 5);
    CHECK(cm.total() == 5);
  }
  SECTION("hand-counted 2x2 case") {
    std::vector<int> truth{0, 0, 1, 1};
    std::vector<int> pred{0, 1, 1, 1};
    ConfusionMatrix cm = metrics::confusion_matrix(truth, pred, 2);
    CHECK(cm.counts[0][0] == 1);
    CHECK(cm.counts[0][1] == 1);
    CHECK(cm.counts[1][0] == 0);
    CHECK(cm.counts[1][1] == 2);
  }
  SECTION("empty input gives a zero matrix") {
    ConfusionMatrix cm = metrics::confusion_matrix({}, {}, 2);
    CHECK(cm.total() == 0);
  }
  SECTION("label range errors") {
    std::vector<int> truth{0, 2};
    std::vector<int> pred{0, 0};
    CHECK_THROWS_AS(metrics::confusion_matrix(truth, pred, 2), ValueError);
  }
  SECTION("accuracy is trace over total") {
    std::vector<int> truth{0, 0, 1, 1, 1};
    std::vector<int> pred{0, 1, 1, 1, 0};
    ConfusionMatrix cm = metrics::confusion_matrix(truth, pred, 2);
    CHECK(metrics::accuracy(cm) == Catch::Approx(3.0 / 5.0).epsilon(1e-12));
  }
}

TEST_CASE("precision/recall/F1") {
  SECTION("diagonal matrix is perfect for every class") {
    std::vector<int> y{0, 1, 2, 0, 1, 2};
    ConfusionMatrix cm = metrics::confusion_matrix(y, y, 3);
    for (int c = 0; c < 3; ++c) {
      metrics::Prf1 m = metrics::prf1(cm, c);
      CHECK(*m.precision == 1.0);
      CHECK(*m.recall == 1.0);
      CHECK(*m.f1 == 1.0);
    }
    metrics::Prf1 macro = metrics::prf1_macro(cm);
    CHECK(*macro.f1 == 1.0);
  }
  SECTION("0/0 cases report absent, not zero") {
    // class 1 never predicted and never present
    std::vector<int> truth{0, 0};
    std::vector<int> pred{0, 0};
    ConfusionMatrix cm = metrics::confusion_matrix(truth, pred, 2);
    metrics::Prf1 m = metrics::prf1(cm, 1);
    CHECK_FALSE(m.precision.has_value());
    CHECK_FALSE(m.recall.has_value());
    CHECK_FALSE(m.f1.has_value());
  }
  SECTION("published Defect row: p 96.49, r 98.57 -> f1 97.50 +/- 0.05") {
    auto f1 = metrics::f1_score(0.9649, 0.9857);
    REQUIRE(f1.has_value());
    CHECK(*f1 * 100.0 == Catch::Approx(97.50).margin(0.05));
  }
  SECTION("published Bridge row: p 99.5, r 99.36 -> f1 99.43 +/- 0.05") {
    auto f1 = metrics::f1_score(0.995, 0.9936);
    REQUIRE(f1.has_value());
    CHECK(*f1 * 100.0 == Catch::Approx(99.43).margin(0.05));
  }
  SECTION("macro metrics are invariant under class relabeling") {
    Rng rng(3);
    std::vector<int> truth, pred;
    for (int i = 0; i < 200; ++i) {
      truth.push_back(static_cast<int>(rng.below(4)));
      pred.push_back(static_cast<int>(rng.below(4)));
    }
    ConfusionMatrix cm = metrics::confusion_matrix(truth, pred, 4);
    metrics::Prf1 base = metrics::prf1_macro(cm);
    std::vector<int> perm{2, 0, 3, 1};
    std::vector<int> truth_p, pred_p;
    for (int t : truth) truth_p.push_back(perm[static_cast<std::size_t>(t)]);
    for (int p : pred) pred_p.push_back(perm[static_cast<std::size_t>(p)]);
    metrics::Prf1 permuted = metrics::prf1_macro(metrics::confusion_matrix(truth_p, pred_p, 4));
    CHECK(*base.precision == Catch::Approx(*permuted.precision).epsilon(1e-12));
    CHECK(*base.recall == Catch::Approx(*permuted.recall).epsilon(1e-12));
    CHECK(*base.f1 == Catch::Approx(*permuted.f1).epsilon(1e-12));
  }
}

TEST_CASE("roc_auc") {
  SECTION("perfect separation") {
    std::vector<double> scores{0.9, 0.8, 0.2, 0.1};
    std::vector<int> labels{1, 1, 0, 0};
    CHECK(metrics::roc_auc(scores, labels).auc == 1.0);
  }
  SECTION("inverted labels give zero") {
    std::vector<double> scores{0.9, 0.8, 0.2, 0.1};
    std::vector<int> labels{0, 0, 1, 1};
    CHECK(metrics::roc_auc(scores, labels).auc == 0.0);
  }
  SECTION("all-equal scores give one half") {
    std::vector<double> scores{0.5, 0.5, 0.5, 0.5};
    std::vector<int> labels{1, 0, 1, 0};
    CHECK(metrics::roc_auc(scores, labels).auc == 0.5);
  }
  SECTION("matches the pairwise oracle on random scores within 1e-9") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 50 + rng.below(200);
      std::vector<double> scores;
      std::vector<int> labels;
      bool tie_heavy = trial % 3 == 0;
      int pos = 0;
      for (std::size_t i = 0; i < n; ++i) {
        scores.push_back(tie_heavy ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform());
        labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
        pos += labels.back();
      }
      if (pos == 0 || pos == static_cast<int>(n)) continue;
      CHECK(std::abs(metrics::roc_auc(scores, labels).auc - auc_pairwise(scores, labels)) < 1e-9);
    }
  }
  SECTION("curve is monotone from (0,0) to (1,1)") {
    Rng rng(11);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 100; ++i) {
      scores.push_back(static_cast<double>(rng.below(10)) / 10.0);
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    auto r = metrics::roc_auc(scores, labels);
    REQUIRE(r.curve.size() >= 2);
    CHECK(r.curve.front().fpr == 0.0);
    CHECK(r.curve.front().tpr == 0.0);
    CHECK(r.curve.back().fpr == 1.0);
    CHECK(r.curve.back().tpr == 1.0);
    for (std::size_t i = 1; i < r.curve.size(); ++i) {
      CHECK(r.curve[i].fpr >= r.curve[i - 1].fpr);
      CHECK(r.curve[i].tpr >= r.curve[i - 1].tpr);
    }
  }
  SECTION("invariant under strictly increasing transforms") {
    Rng rng(13);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 150; ++i) {
      scores.push_back(rng.uniform() * 4.0 - 2.0);
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = metrics::roc_auc(scores, labels).auc;
    std::vector<double> exp_scores, affine_scores;
    for (double s : scores) {
      exp_scores.push_back(std::exp(s));
      affine_scores.push_back(3.5 * s + 11.0);
    }
    CHECK(metrics::roc_auc(exp_scores, labels).auc == Catch::Approx(base).epsilon(1e-12));
    CHECK(metrics::roc_auc(affine_scores, labels).auc == Catch::Approx(base).epsilon(1e-12));
  }
  SECTION("single-class input is an error") {
    std::vector<double> scores{0.1, 0.2};
    std::vector<int> labels{1, 1};
    CHECK_THROWS_AS(metrics::roc_auc(scores, labels), ValueError);
  }
}

TEST_CASE("multiclass_auc") {
  SECTION("exact one-hot probabilities score 1") {
    std::vector<std::vector<double>> probs{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}};
    std::vector<int> labels{0, 1, 2, 0};
    CHECK(metrics::multiclass_auc(probs, labels) == 1.0);
  }
  SECTION("binary case reduces to roc_auc on column 1") {
    Rng rng(17);
    std::vector<std::vector<double>> probs;
    std::vector<int> labels;
    std::vector<double> col1;
    std::vector<int> bin;
    for (int i = 0; i < 80; ++i) {
      const double p = rng.uniform();
      probs.push_back({1.0 - p, p});
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
      col1.push_back(p);
      bin.push_back(labels.back());
    }
    labels[0] = 0;
    labels[1] = 1;
    bin[0] = 0;
    bin[1] = 1;
    CHECK(metrics::multiclass_auc(probs, labels) ==
          Catch::Approx(metrics::roc_auc(col1, bin).auc).epsilon(1e-12));
  }
  SECTION("matches the per-class pairwise oracle average within 1e-9") {
    Rng rng(19);
    std::vector<std::vector<double>> probs;
    std::vector<int> labels;
    for (int i = 0; i < 90; ++i) {
      double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
      const double z = a + b + c;
      probs.push_back({a / z, b / z, c / z});
      labels.push_back(static_cast<int>(rng.below(3)));
    }
    labels[0] = 0;
    labels[1] = 1;
    labels[2] = 2;
    double oracle = 0.0;
    for (int cls = 0; cls < 3; ++cls) {
      std::vector<double> scores;
      std::vector<int> bin;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        scores.push_back(probs[i][static_cast<std::size_t>(cls)]);
        bin.push_back(labels[i] == cls ? 1 : 0);
      }
      oracle += auc_pairwise(scores, bin);
    }
    oracle /= 3.0;
    CHECK(std::abs(metrics::multiclass_auc(probs, labels) - oracle) < 1e-9);
  }
  SECTION("absent classes are skipped") {
    std::vector<std::vector<double>> probs{{0.8, 0.1, 0.1}, {0.2, 0.7, 0.1}, {0.3, 0.6, 0.1}};
    std::vector<int> labels{0, 1, 1};  // class 2 absent
    CHECK_NOTHROW(metrics::multiclass_auc(probs, labels));
  }
  SECTION("fewer than two present classes is an error") {
    std::vector<std::vector<double>> probs{{0.8, 0.2}, {0.6, 0.4}};
    std::vector<int> labels{0, 0};
    CHECK_THROWS_AS(metrics::multiclass_auc(probs, labels), ValueError);
  }
}

TEST_CASE("fold aggregation is the mean of present metrics") {
  std::vector<metrics::FoldReport> folds(3);
  folds[0].metrics.accuracy = 0.9;
  folds[1].metrics.accuracy = 0.8;
  folds[2].metrics.accuracy = 1.0;
  folds[0].metrics.auc = 0.95;
  folds[1].metrics.auc = {};
  folds[2].metrics.auc = 0.85;
  folds[0].metrics.f1 = {};
  folds[1].metrics.f1 = {};
  folds[2].metrics.f1 = {};
  metrics::FoldMetrics agg = metrics::aggregate_folds(folds);
  CHECK(*agg.accuracy == Catch::Approx(0.9).epsilon(1e-12));
  CHECK(*agg.auc == Catch::Approx(0.9).epsilon(1e-12));
  CHECK_FALSE(agg.f1.has_value());
}

TEST_CASE("compare_reports on the published tables") {
  metrics::MetricTable mv = metrics::paper_mvgg19_table();
  metrics::MetricTable vg = metrics::paper_vgg19_table();
  metrics::CompareResult r = metrics::compare_reports(mv, vg);
  REQUIRE(r.accuracy_delta_pp.size() == 6);
  const std::vector<std::pair<std::string, double>> expected{
      {"Casting", -9.77}, {"Defect", 26.98}, {"Magnetic", 15.35},
      {"Tech", 5.94},     {"Bridge", 0.30},  {"Solar", 2.93}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.accuracy_delta_pp[i].first == expected[i].first);
    CHECK(r.accuracy_delta_pp[i].second == Catch::Approx(expected[i].second).margin(0.005));
  }
  CHECK(r.mean_accuracy_delta_pp == Catch::Approx(6.96).margin(0.02));
}

TEST_CASE("compare_reports identity and mismatch") {
  metrics::MetricTable mv = metrics::paper_mvgg19_table();
  metrics::CompareResult self = metrics::compare_reports(mv, mv);
  for (const auto& [name, delta] : self.accuracy_delta_pp) CHECK(delta == 0.0);
  CHECK(self.mean_accuracy_delta_pp == 0.0);

  metrics::MetricTable other;
  other.label = "other";
  other.rows.emplace_back("SomethingElse", metrics::MetricRow{});
  CHECK_THROWS_AS(metrics::compare_reports(mv, other), ValueError);
}

TEST_CASE("paper fixture stores the published values verbatim") {
  metrics::MetricTable mv = metrics::paper_mvgg19_table();
  const metrics::MetricRow* defect = mv.find("Defect");
  REQUIRE(defect != nullptr);
  CHECK(*defect->accuracy == 97.88);
  CHECK(*defect->precision == 96.49);
  CHECK(*defect->recall == 98.57);
  CHECK(*defect->f1 == 97.5);
  CHECK(*defect->auc == 99.59);
  const metrics::MetricRow* casting = mv.find("Casting");
  REQUIRE(casting != nullptr);
  CHECK_FALSE(casting->recall.has_value());  // "-" in the source
  CHECK_FALSE(casting->f1.has_value());
  const metrics::MetricRow* solar = mv.find("Solar");
  REQUIRE(solar != nullptr);
  CHECK(*solar->accuracy == 76.78);  // table value, not the 76.68 from the text
}
