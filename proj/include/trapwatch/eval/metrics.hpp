#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "trapwatch/eval/confusion.hpp"

namespace trapwatch::eval {

/// Exact count ratio. A zero denominator means UNDEFINED (0/0), which is
/// reported as such rather than coerced to zero.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 0;

  bool defined() const noexcept { return den != 0; }
  std::optional<double> value() const {
    if (!defined()) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Percentage in hundredths (9056 == 90.56%), rounded half-up from the exact
/// fraction. nullopt when undefined.
std::optional<std::int64_t> percent_hundredths(const Ratio& r);

/// "90.56%" or "UNDEFINED".
std::string format_percent(const Ratio& r);
std::string format_hundredths(std::optional<std::int64_t> hundredths);

struct ClassMetrics {
  int class_id = 0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;
  Ratio precision;    // tp / (tp + fp)
  Ratio recall;       // tp / (tp + fn), a.k.a. sensitivity
  Ratio specificity;  // tn / (tn + fp)
  Ratio f1;           // 2tp / (2tp + fp + fn), the harmonic mean of the two above
  Ratio accuracy;     // (tp + tn) / total
};

/// Metrics straight from counts.
ClassMetrics metrics_from_counts(int class_id, std::int64_t tp, std::int64_t fp,
                                 std::int64_t tn, std::int64_t fn);

/// One-vs-rest counts for `class_id`. Throws Errc::unknown_class.
ClassMetrics class_metrics(const ConfusionMatrix& cm, int class_id);

enum class AveragePolicy { skip_undefined, undefined_as_zero };
std::string_view to_string(AveragePolicy p) noexcept;

/// Arithmetic mean of one metric across classes, computed exactly.
struct MeanValue {
  std::optional<double> value;
  std::optional<std::int64_t> hundredths;  // rounded half-up
  std::size_t used = 0;                    // classes that contributed
};

struct MacroAverage {
  AveragePolicy policy = AveragePolicy::skip_undefined;
  MeanValue precision;
  MeanValue recall;
  MeanValue specificity;
  MeanValue f1;
  MeanValue accuracy;
};

/// Throws Errc::empty_input on an empty list.
MacroAverage macro_average(std::span<const ClassMetrics> metrics, AveragePolicy policy);

}  // namespace trapwatch::eval
