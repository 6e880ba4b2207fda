#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "instances.hpp"
#include "oracles.hpp"
#include "support.hpp"
#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/error.hpp"
#include "trapwatch/eval/average_precision.hpp"
#include "trapwatch/eval/confusion.hpp"
#include "trapwatch/eval/curves.hpp"
#include "trapwatch/eval/iou.hpp"
#include "trapwatch/eval/matching.hpp"
#include "trapwatch/eval/metrics.hpp"
#include "trapwatch/eval/records.hpp"
#include "trapwatch/eval/report.hpp"

using namespace trapwatch;
using namespace trapwatch::eval;
namespace oracle = trapwatch::test::oracle;

namespace {

constexpr int kArquata = 22;
constexpr int kChick = 23;
constexpr int kPheasant = 18;
constexpr int kSheep = 20;

// Rows of the published deployment confusion matrix, actual x predicted.
ConfusionMatrix deployment_matrix() {
  return ConfusionMatrix::from_counts({kArquata, kChick, kPheasant, kSheep},
                                      {{662, 0, 36, 33}, {0, 302, 0, 25}, {0, 0, 0, 0}, {0, 0, 0, 13}});
}

std::int64_t pct(const Ratio& r) { return *percent_hundredths(r); }

using test::random_instance;
using test::to_box;

}  // namespace

TEST_CASE("class metrics reproduce the published curlew figures") {
  const auto cm = deployment_matrix();
  CHECK(cm.total() == 1071);
  const auto a = class_metrics(cm, kArquata);
  CHECK(a.tp == 662);
  CHECK(a.fp == 0);
  CHECK(a.fn == 69);
  CHECK(a.tn == 340);
  CHECK(pct(a.precision) == 10000);
  CHECK(pct(a.recall) == 9056);
  CHECK(pct(a.specificity) == 10000);
  CHECK(pct(a.f1) == 9505);
  CHECK(pct(a.accuracy) == 9356);

  const auto c = class_metrics(cm, kChick);
  CHECK(pct(c.precision) == 10000);
  CHECK(pct(c.recall) == 9235);
  CHECK(pct(c.specificity) == 10000);
  CHECK(pct(c.f1) == 9603);
  CHECK(pct(c.accuracy) == 9767);

  const auto p = class_metrics(cm, kPheasant);
  CHECK(pct(p.precision) == 0);
  CHECK_FALSE(p.recall.defined());
  CHECK(format_percent(p.recall) == "UNDEFINED");
  CHECK(pct(p.specificity) == 9664);

  const auto s = class_metrics(cm, kSheep);
  CHECK(s.precision == Ratio{13, 71});
  CHECK(s.recall == Ratio{13, 13});
}

TEST_CASE("class metrics counts always add up") {
  const auto cm = deployment_matrix();
  for (int c : cm.classes()) {
    const auto m = class_metrics(cm, c);
    CHECK(m.tp + m.fp + m.tn + m.fn == cm.total());
    CHECK(m.tp >= 0);
    CHECK(m.tn >= 0);
  }
  CHECK_THROWS_AS(class_metrics(cm, 5), Error);
}

TEST_CASE("percentages round half up from the exact fraction") {
  CHECK(*percent_hundredths(Ratio{1, 8}) == 1250);
  CHECK(*percent_hundredths(Ratio{1, 80000}) == 0);
  CHECK(*percent_hundredths(Ratio{1, 20000}) == 1);  // exactly 0.005%
  CHECK(*percent_hundredths(Ratio{2, 3}) == 6667);
  CHECK_FALSE(percent_hundredths(Ratio{0, 0}));
  CHECK(format_percent(Ratio{662, 731}) == "90.56%");
}

TEST_CASE("F1 equals the harmonic mean of precision and recall") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    std::uniform_int_distribution<int> d(0, 50);
    const int tp = d(rng) + 1, fp = d(rng), fn = d(rng), tn = d(rng);
    const auto m = metrics_from_counts(1, tp, fp, tn, fn);
    const double p = *m.precision.value(), r = *m.recall.value();
    CHECK(*m.f1.value() == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
  }
}

TEST_CASE("macro average over displayed and exact inputs") {
  auto shown = [](int class_id, std::int64_t num) {
    return metrics_from_counts(class_id, num, 0, 0, 10000 - num);
  };
  std::vector<ClassMetrics> displayed{shown(1, 9056), shown(2, 9235), shown(3, 10000)};
  CHECK(*macro_average(displayed, AveragePolicy::skip_undefined).recall.hundredths == 9430);

  const auto cm = deployment_matrix();
  std::vector<ClassMetrics> exact{class_metrics(cm, kArquata), class_metrics(cm, kChick),
                                  class_metrics(cm, kSheep)};
  CHECK(*macro_average(exact, AveragePolicy::skip_undefined).recall.hundredths == 9431);

  std::vector<ClassMetrics> all{class_metrics(cm, kPheasant), class_metrics(cm, kSheep),
                                class_metrics(cm, kArquata), class_metrics(cm, kChick)};
  auto skip = macro_average(all, AveragePolicy::skip_undefined);
  auto zero = macro_average(all, AveragePolicy::undefined_as_zero);
  CHECK(skip.recall.used == 3);
  CHECK(zero.recall.used == 4);
  CHECK(*zero.recall.hundredths < *skip.recall.hundredths);
  CHECK_THROWS_AS(macro_average(std::vector<ClassMetrics>{}, AveragePolicy::skip_undefined), Error);
}

TEST_CASE("report flags the published figures that the matrix does not support") {
  const auto report = report_from_matrix(deployment_matrix());
  const auto macro = macro_average(report.per_class, AveragePolicy::skip_undefined);
  const auto ref = parse_reference(test::slurp(test::fixture("deployment_reference.tsv")));
  const auto checks = check_against_reference(report, macro, ref, SpeciesCatalog::default_catalog());
  auto find = [&](std::string_view label, std::string_view metric) {
    for (const auto& c : checks) {
      if (c.published.label == label && c.published.metric == metric) return c;
    }
    FAIL("missing check");
    return checks.front();
  };
  auto acc = find("Numenius arquata", "Accuracy");
  CHECK_FALSE(acc.consistent);
  CHECK(acc.published.hundredths == 9341);
  CHECK(*acc.derived == 9356);
  auto chick_acc = find("Numenius arquata chick", "Accuracy");
  CHECK_FALSE(chick_acc.consistent);
  CHECK(*chick_acc.derived == 9767);
  CHECK(find("Numenius arquata", "F1").consistent);
  CHECK(find("Numenius arquata chick", "Sensitivity").consistent);
  CHECK_FALSE(find("MACRO", "Sensitivity").consistent);

  const auto text = format_reference_checks(checks, AveragePolicy::skip_undefined);
  CHECK(text.find("INCONSISTENT\tNumenius arquata\tAccuracy\tpublished=93.41%\tderived=93.56%") !=
        std::string::npos);
  CHECK(text.find("published=97.51%\tderived=97.67%") != std::string::npos);
}

TEST_CASE("metrics table layout") {
  const auto report = report_from_matrix(deployment_matrix());
  const auto table = format_metrics_table(report, SpeciesCatalog::default_catalog());
  CHECK(table.rfind("Class\tAccuracy\tPrecision\tSensitivity\tSpecificity\tF1\n", 0) == 0);
  CHECK(table.find("Numenius arquata\t93.56%\t100.00%\t90.56%\t100.00%\t95.05%") != std::string::npos);
  CHECK(table.find("Phasianus colchicus\t96.64%\t0.00%\tUNDEFINED\t96.64%\t0.00%") != std::string::npos);
}

TEST_CASE("deployment report from reviewed detections") {
  std::vector<Detection> dets;
  auto add = [&](int predicted, std::variant<int, VerdictSentinel> truth) {
    Detection d;
    d.detection_id = std::to_string(dets.size());
    d.class_id = predicted;
    d.verdict = HumanVerdict{truth, "r", {}};
    dets.push_back(d);
  };
  add(kArquata, kArquata);
  add(kArquata, kChick);
  add(kChick, VerdictSentinel::blank);
  add(kChick, VerdictSentinel::no_good);
  const auto report = deployment_report(dets);
  CHECK(report.evaluated == 3);
  CHECK(report.excluded_no_good == 1);
  CHECK(report.matrix.count(kArquata, kArquata) == 1);
  CHECK(report.matrix.count(kChick, kArquata) == 1);
  CHECK(report.matrix.background_row(kChick) == 1);

  dets.push_back(Detection{});
  try {
    deployment_report(dets);
    FAIL("expected unverified_detections");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::unverified_detections);
  }
}

TEST_CASE("IoU against counted cells") {
  CHECK(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0));
  CHECK(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{20, 20, 30, 30}) == 0.0);
  CHECK(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{0, 0, 10, 10}) == 1.0);
  CHECK_THROWS_AS(iou(BoundingBox{0, 0, 1, 1}, BoundingBox{0, 0, 1, 1, Frame::model_input}), Error);

  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> d(0, 12), w(1, 8);
  for (int i = 0; i < 300; ++i) {
    oracle::IBox a{d(rng), d(rng), 0, 0}, b{d(rng), d(rng), 0, 0};
    a.x1 = a.x0 + w(rng);
    a.y1 = a.y0 + w(rng);
    b.x1 = b.x0 + w(rng);
    b.y1 = b.y0 + w(rng);
    const auto f = oracle::iou(a, b);
    const double v = iou(to_box(a), to_box(b));
    CHECK(v == static_cast<double>(f.num) / static_cast<double>(f.den));
    CHECK(v == iou(to_box(b), to_box(a)));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("greedy matching agrees with the oracle") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    auto in = random_instance(rng, 6, 4, 3);
    for (auto policy : {ClassPolicy::same_class, ClassPolicy::class_agnostic}) {
      const auto m = match_detections(in.preds, in.truths, 0.5, policy);
      const auto o = oracle::greedy(in.opreds, in.otruths, 50, policy == ClassPolicy::same_class);
      REQUIRE(m.pred_to_truth.size() == o.pred_to_truth.size());
      for (std::size_t k = 0; k < m.pred_to_truth.size(); ++k) CHECK(m.pred_to_truth[k] == o.pred_to_truth[k]);
      // One-to-one.
      std::set<std::size_t> used;
      for (const auto& t : m.pred_to_truth) {
        if (t) CHECK(used.insert(*t).second);
      }
      CHECK(m.true_positives() + m.false_negatives() == in.truths.size());
    }
  }
}

TEST_CASE("confidence curves agree with per-threshold recounts") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 200; ++i) {
    auto in = random_instance(rng, 6, 4, 3);
    const auto curves = confidence_curves(in.preds, in.truths, 0.5);
    REQUIRE(curves.precision.thresholds.size() == curves.recall.thresholds.size());
    for (std::size_t k = 0; k < curves.precision.thresholds.size(); ++k) {
      const double t = curves.precision.thresholds[k];
      const auto o = oracle::at_threshold(in.opreds, in.otruths, t, 50);
      auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
      CHECK(same(curves.precision.values[k], o.precision));
      CHECK(same(curves.recall.values[k], o.recall));
      CHECK(same(curves.f1.values[k], o.f1));
    }
  }
}

TEST_CASE("average precision agrees with rank enumeration") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 300; ++i) {
    auto in = random_instance(rng, 6, 4, 3);
    for (int c = 0; c < 3; ++c) {
      const auto ap = average_precision(in.preds, in.truths, c, 0.5);
      const auto o = oracle::average_precision(in.opreds, in.otruths, c, 50);
      REQUIRE(ap.has_value() == o.as_double.has_value());
      if (!ap) continue;
      CHECK(*ap == *o.as_double);
      CHECK(std::abs(*ap - o.exact->convert_to<double>()) <= 1e-12);
      CHECK(*ap >= 0.0);
      CHECK(*ap <= 1.0);
    }
  }
}

TEST_CASE("mAP edge cases") {
  std::vector<GroundTruth> truths{{"a", 1, {0, 0, 10, 10}}, {"b", 2, {5, 5, 9, 9}}};
  std::vector<ScoredPrediction> perfect{{"a", 1, 0.9, {0, 0, 10, 10}}, {"b", 2, 0.8, {5, 5, 9, 9}}};
  auto m = mean_average_precision(perfect, truths);
  CHECK(*m.map == 1.0);
  auto none = mean_average_precision({}, truths);
  CHECK(*none.map == 0.0);
  std::vector<ScoredPrediction> extra = perfect;
  extra.push_back({"a", 7, 0.5, {0, 0, 1, 1}});
  auto e = mean_average_precision(extra, truths);
  CHECK(e.classes_without_truths == std::vector<int>{7});
  CHECK(*e.map == 1.0);
  CHECK_FALSE(mean_average_precision(perfect, {}).map);
}

TEST_CASE("curve csv") {
  CurveSeries s{CurveKind::recall, {0.0, 0.5}, {1.0, std::numeric_limits<double>::quiet_NaN()}};
  CHECK(to_csv(s) == "threshold,recall\n0.000000,1.000000\n0.500000,nan\n");
}

TEST_CASE("records parse and report line numbers") {
  auto preds = parse_predictions("# c\nimg1 22 0.9 1 2 3 4\n\nimg2 23 0.5 0 0 5 5\n");
  REQUIRE(preds.size() == 2);
  CHECK(preds[0].box == BoundingBox{1, 2, 3, 4});
  auto truths = parse_truths("img1 22 1 2 3 4\nimg1 22 0.9 1 2 3 4\n");
  CHECK(truths.size() == 2);
  try {
    parse_predictions("img1 22 0.9 1 2 3 4\nimg2 x 0.9 1 2 3 4\n");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("confusion from detections puts misses on the background") {
  std::vector<GroundTruth> truths{{"a", 1, {0, 0, 10, 10}}, {"a", 2, {50, 50, 60, 60}}};
  std::vector<ScoredPrediction> preds{{"a", 2, 0.9, {0, 0, 10, 10}}, {"a", 1, 0.4, {80, 80, 90, 90}}};
  auto cm = confusion_from_detections(preds, truths);
  CHECK(cm.count(1, 2) == 1);
  CHECK(cm.background_column(2) == 1);
  CHECK(cm.background_row(1) == 1);
  CHECK(cm.total() == 3);
}

TEST_CASE("deployment fixture evaluates to the matrix") {
  const auto preds = load_predictions(test::fixture("deployment_preds.txt"));
  const auto truths = load_truths(test::fixture("deployment_truths.txt"));
  CHECK(preds.size() == 1071);
  const auto cm = confusion_from_detections(preds, truths);
  const auto ref = deployment_matrix();
  for (int a : ref.classes()) {
    for (int p : ref.classes()) CHECK(cm.count(a, p) == ref.count(a, p));
  }
  CHECK_FALSE(cm.has_background());
}
