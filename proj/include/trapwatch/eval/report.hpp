#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trapwatch/core/catalog.hpp"
#include "trapwatch/core/types.hpp"
#include "trapwatch/eval/metrics.hpp"

namespace trapwatch::eval {

/// Per-class table plus the matrix it was derived from.
struct DeploymentReport {
  ConfusionMatrix matrix;
  std::vector<ClassMetrics> per_class;  // matrix class order
  std::size_t evaluated = 0;
  std::size_t excluded_no_good = 0;
};

/// Classification-mode evaluation of reviewed detections: actual = verdict
/// class (BLANK is background), predicted = model class. NO_GOOD verdicts are
/// dropped. Throws Errc::unverified_detections if any detection lacks a
/// verdict; the message carries the count.
DeploymentReport deployment_report(std::span<const Detection> detections);

/// Report over a confusion matrix that was built elsewhere.
DeploymentReport report_from_matrix(ConfusionMatrix matrix);

/// Columns Accuracy, Precision, Sensitivity, Specificity, F1 in that order,
/// percentages at two decimals.
std::string format_metrics_table(const DeploymentReport& report, const SpeciesCatalog& catalog);
/// Actual rows x predicted columns with totals.
std::string format_confusion_table(const ConfusionMatrix& cm, const SpeciesCatalog& catalog);
std::string format_macro(const MacroAverage& avg);

nlohmann::json metrics_json(const DeploymentReport& report, const SpeciesCatalog& catalog);
nlohmann::json confusion_json(const ConfusionMatrix& cm, const SpeciesCatalog& catalog);
nlohmann::json macro_json(const MacroAverage& avg);

/// A published figure to check a derived report against. `label` is a class
/// name from the catalog or "MACRO" for the across-class averages.
struct ReferenceValue {
  std::string label;
  std::string metric;  // Accuracy | Precision | Sensitivity | Specificity | F1
  std::int64_t hundredths = 0;
};

/// `label<TAB>metric<TAB>percent` lines, e.g. `Numenius arquata	F1	95.05`.
std::vector<ReferenceValue> parse_reference(std::string_view text);

struct ReferenceCheck {
  ReferenceValue published;
  std::optional<std::int64_t> derived;
  bool consistent = false;
};

/// Compares at two-decimal resolution. MACRO rows are compared against
/// `macro` (whose policy is printed alongside).
std::vector<ReferenceCheck> check_against_reference(const DeploymentReport& report,
                                                    const MacroAverage& macro,
                                                    std::span<const ReferenceValue> reference,
                                                    const SpeciesCatalog& catalog);

/// `CONSISTENT`/`INCONSISTENT` line per check, both figures printed.
std::string format_reference_checks(std::span<const ReferenceCheck> checks,
                                    AveragePolicy policy);

}  // namespace trapwatch::eval
