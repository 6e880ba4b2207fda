#include "trapwatch/eval/metrics.hpp"

#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::eval {
namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

Ratio ratio(std::int64_t num, std::int64_t den) { return den == 0 ? Ratio{0, 0} : Ratio{num, den}; }

// floor(q * 10000 + 1/2) for q >= 0.
std::int64_t round_hundredths(const cpp_rational& q) {
  cpp_rational scaled = q * 10000 + cpp_rational(1, 2);
  cpp_int whole = boost::multiprecision::numerator(scaled) / boost::multiprecision::denominator(scaled);
  return whole.convert_to<std::int64_t>();
}

MeanValue mean_of(std::span<const ClassMetrics> metrics, Ratio ClassMetrics::*field,
                  AveragePolicy policy) {
  cpp_rational sum = 0;
  std::size_t used = 0;
  for (const auto& m : metrics) {
    const Ratio& r = m.*field;
    if (r.defined()) {
      sum += cpp_rational(r.num, r.den);
      ++used;
    } else if (policy == AveragePolicy::undefined_as_zero) {
      ++used;
    }
  }
  MeanValue out;
  out.used = used;
  if (used == 0) return out;
  cpp_rational mean = sum / static_cast<long long>(used);
  out.value = mean.convert_to<double>();
  out.hundredths = round_hundredths(mean);
  return out;
}

}  // namespace

std::optional<std::int64_t> percent_hundredths(const Ratio& r) {
  if (!r.defined()) return std::nullopt;
  // Half-up rounding of 10000 * num / den, exact for non-negative counts.
  const __int128 num = r.num;
  const __int128 den = r.den;
  return static_cast<std::int64_t>((num * 20000 + den) / (den * 2));
}

std::string format_hundredths(std::optional<std::int64_t> hundredths) {
  if (!hundredths) return "UNDEFINED";
  return fmt::format("{}.{:02}%", *hundredths / 100, *hundredths % 100);
}

std::string format_percent(const Ratio& r) { return format_hundredths(percent_hundredths(r)); }

ClassMetrics metrics_from_counts(int class_id, std::int64_t tp, std::int64_t fp, std::int64_t tn,
                                 std::int64_t fn) {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0) {
    throw Error(Errc::invalid_argument, "metric counts must be non-negative");
  }
  ClassMetrics m;
  m.class_id = class_id;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.specificity = ratio(tn, tn + fp);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  return m;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, int class_id) {
  if (!cm.has_class(class_id)) {
    throw Error(Errc::unknown_class, fmt::format("class {} is not in the matrix", class_id));
  }
  const auto tp = cm.count(class_id, class_id);
  const auto fp = cm.column_total(class_id) - tp;
  const auto fn = cm.row_total(class_id) - tp;
  const auto tn = cm.total() - tp - fp - fn;
  return metrics_from_counts(class_id, tp, fp, tn, fn);
}

std::string_view to_string(AveragePolicy p) noexcept {
  return p == AveragePolicy::skip_undefined ? "skip-undefined" : "undefined-as-zero";
}

MacroAverage macro_average(std::span<const ClassMetrics> metrics, AveragePolicy policy) {
  if (metrics.empty()) throw Error(Errc::empty_input, "macro_average of no classes");
  MacroAverage avg;
  avg.policy = policy;
  avg.precision = mean_of(metrics, &ClassMetrics::precision, policy);
  avg.recall = mean_of(metrics, &ClassMetrics::recall, policy);
  avg.specificity = mean_of(metrics, &ClassMetrics::specificity, policy);
  avg.f1 = mean_of(metrics, &ClassMetrics::f1, policy);
  avg.accuracy = mean_of(metrics, &ClassMetrics::accuracy, policy);
  return avg;
}

}  // namespace trapwatch::eval
