#include "trapwatch/eval/report.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include <fmt/format.h>

#include "trapwatch/core/error.hpp"

namespace trapwatch::eval {
namespace {

constexpr std::string_view kMetricNames[] = {"Accuracy", "Precision", "Sensitivity",
                                             "Specificity", "F1"};

const Ratio& metric_of(const ClassMetrics& m, std::string_view name) {
  if (name == "Accuracy") return m.accuracy;
  if (name == "Precision") return m.precision;
  if (name == "Sensitivity") return m.recall;
  if (name == "Specificity") return m.specificity;
  if (name == "F1") return m.f1;
  throw Error(Errc::invalid_argument, fmt::format("unknown metric '{}'", name));
}

const MeanValue& metric_of(const MacroAverage& avg, std::string_view name) {
  if (name == "Accuracy") return avg.accuracy;
  if (name == "Precision") return avg.precision;
  if (name == "Sensitivity") return avg.recall;
  if (name == "Specificity") return avg.specificity;
  if (name == "F1") return avg.f1;
  throw Error(Errc::invalid_argument, fmt::format("unknown metric '{}'", name));
}

std::string class_label(int class_id, const SpeciesCatalog& catalog) {
  if (catalog.contains(class_id)) return catalog.at(class_id).scientific_name;
  return fmt::format("class {}", class_id);
}

nlohmann::json ratio_json(const Ratio& r) {
  nlohmann::json j;
  j["num"] = r.num;
  j["den"] = r.den;
  j["percent"] = format_percent(r);
  if (auto v = r.value()) {
    j["value"] = *v;
  } else {
    j["value"] = nullptr;
  }
  return j;
}

nlohmann::json mean_json(const MeanValue& m) {
  nlohmann::json j;
  j["value"] = m.value ? nlohmann::json(*m.value) : nlohmann::json(nullptr);
  j["percent"] = format_hundredths(m.hundredths);
  j["classes"] = m.used;
  return j;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// "93.41" or "93.41%" to hundredths; exactly two decimals are not required.
std::int64_t parse_hundredths(std::string_view text, std::size_t line_no) {
  text = trim(text);
  if (!text.empty() && text.back() == '%') text.remove_suffix(1);
  auto dot = text.find('.');
  std::string_view whole = text.substr(0, dot);
  std::string frac = dot == std::string_view::npos ? "" : std::string(text.substr(dot + 1));
  auto bad = [&] {
    return Error(Errc::invalid_argument,
                 fmt::format("reference line {}: bad percentage '{}'", line_no, text));
  };
  if (whole.empty() || frac.size() > 2) throw bad();
  frac.resize(2, '0');
  std::int64_t w = 0;
  std::int64_t f = 0;
  auto r1 = std::from_chars(whole.data(), whole.data() + whole.size(), w);
  auto r2 = std::from_chars(frac.data(), frac.data() + frac.size(), f);
  if (r1.ec != std::errc{} || r1.ptr != whole.data() + whole.size() || r2.ec != std::errc{} ||
      r2.ptr != frac.data() + frac.size() || w < 0) {
    throw bad();
  }
  return w * 100 + f;
}

}  // namespace

DeploymentReport report_from_matrix(ConfusionMatrix matrix) {
  DeploymentReport report;
  for (int c : matrix.classes()) report.per_class.push_back(class_metrics(matrix, c));
  report.evaluated = static_cast<std::size_t>(matrix.total());
  report.matrix = std::move(matrix);
  return report;
}

DeploymentReport deployment_report(std::span<const Detection> detections) {
  std::size_t unverified = 0;
  std::set<int> classes;
  for (const auto& d : detections) {
    if (!d.verdict) {
      ++unverified;
      continue;
    }
    classes.insert(d.class_id);
    if (d.verdict->is_class()) classes.insert(d.verdict->true_class_id());
  }
  if (unverified > 0) {
    throw Error(Errc::unverified_detections,
                fmt::format("{} detection(s) have no verdict", unverified));
  }
  ConfusionMatrix cm(std::vector<int>(classes.begin(), classes.end()));
  std::size_t excluded = 0;
  for (const auto& d : detections) {
    const auto& v = *d.verdict;
    if (v.is(VerdictSentinel::no_good)) {
      ++excluded;
      continue;
    }
    std::optional<int> actual;
    if (v.is_class()) actual = v.true_class_id();
    cm.add(actual, d.class_id);
  }
  auto report = report_from_matrix(std::move(cm));
  report.excluded_no_good = excluded;
  return report;
}

std::string format_metrics_table(const DeploymentReport& report, const SpeciesCatalog& catalog) {
  std::string out = "Class";
  for (auto name : kMetricNames) out += fmt::format("\t{}", name);
  out += '\n';
  for (const auto& m : report.per_class) {
    out += class_label(m.class_id, catalog);
    for (auto name : kMetricNames) out += fmt::format("\t{}", format_percent(metric_of(m, name)));
    out += '\n';
  }
  return out;
}

std::string format_confusion_table(const ConfusionMatrix& cm, const SpeciesCatalog& catalog) {
  const bool bg = cm.has_background();
  std::string out = "Actual\\Predicted";
  for (int p : cm.classes()) out += '\t' + class_label(p, catalog);
  if (bg) out += "\tbackground";
  out += "\tTotal\n";
  for (int a : cm.classes()) {
    out += class_label(a, catalog);
    for (int p : cm.classes()) out += fmt::format("\t{}", cm.count(a, p));
    if (bg) out += fmt::format("\t{}", cm.background_column(a));
    out += fmt::format("\t{}\n", cm.row_total(a));
  }
  if (bg) {
    out += "background";
    std::int64_t sum = 0;
    for (int p : cm.classes()) {
      out += fmt::format("\t{}", cm.background_row(p));
      sum += cm.background_row(p);
    }
    out += fmt::format("\t0\t{}\n", sum);
  }
  out += "Total";
  for (int p : cm.classes()) out += fmt::format("\t{}", cm.column_total(p));
  if (bg) {
    std::int64_t sum = 0;
    for (int a : cm.classes()) sum += cm.background_column(a);
    out += fmt::format("\t{}", sum);
  }
  out += fmt::format("\t{}\n", cm.total());
  return out;
}

std::string format_macro(const MacroAverage& avg) {
  std::string out = fmt::format("Macro average ({})", to_string(avg.policy));
  for (auto name : kMetricNames) {
    const auto& m = metric_of(avg, name);
    out += fmt::format("\t{}={}", name, format_hundredths(m.hundredths));
  }
  out += '\n';
  return out;
}

nlohmann::json metrics_json(const DeploymentReport& report, const SpeciesCatalog& catalog) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : report.per_class) {
    nlohmann::json row;
    row["class_id"] = m.class_id;
    row["class_name"] = class_label(m.class_id, catalog);
    row["tp"] = m.tp;
    row["fp"] = m.fp;
    row["tn"] = m.tn;
    row["fn"] = m.fn;
    row["accuracy"] = ratio_json(m.accuracy);
    row["precision"] = ratio_json(m.precision);
    row["sensitivity"] = ratio_json(m.recall);
    row["specificity"] = ratio_json(m.specificity);
    row["f1"] = ratio_json(m.f1);
    rows.push_back(std::move(row));
  }
  nlohmann::json j;
  j["classes"] = std::move(rows);
  j["evaluated"] = report.evaluated;
  j["excluded_no_good"] = report.excluded_no_good;
  return j;
}

nlohmann::json confusion_json(const ConfusionMatrix& cm, const SpeciesCatalog& catalog) {
  nlohmann::json j;
  nlohmann::json labels = nlohmann::json::array();
  for (int c : cm.classes()) {
    labels.push_back({{"class_id", c}, {"class_name", class_label(c, catalog)}});
  }
  nlohmann::json rows = nlohmann::json::array();
  for (int a : cm.classes()) {
    nlohmann::json row = nlohmann::json::array();
    for (int p : cm.classes()) row.push_back(cm.count(a, p));
    rows.push_back(std::move(row));
  }
  nlohmann::json bg_row = nlohmann::json::array();
  nlohmann::json bg_col = nlohmann::json::array();
  for (int c : cm.classes()) {
    bg_row.push_back(cm.background_row(c));
    bg_col.push_back(cm.background_column(c));
  }
  j["classes"] = std::move(labels);
  j["matrix"] = std::move(rows);
  j["background_row"] = std::move(bg_row);
  j["background_column"] = std::move(bg_col);
  j["total"] = cm.total();
  return j;
}

nlohmann::json macro_json(const MacroAverage& avg) {
  nlohmann::json j;
  j["policy"] = std::string(to_string(avg.policy));
  j["accuracy"] = mean_json(avg.accuracy);
  j["precision"] = mean_json(avg.precision);
  j["sensitivity"] = mean_json(avg.recall);
  j["specificity"] = mean_json(avg.specificity);
  j["f1"] = mean_json(avg.f1);
  return j;
}

std::vector<ReferenceValue> parse_reference(std::string_view text) {
  std::vector<ReferenceValue> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) {
      throw Error(Errc::invalid_argument,
                  fmt::format("reference line {}: expected label, metric, percent", line_no));
    }
    ReferenceValue v;
    v.label = std::string(trim(line.substr(0, t1)));
    v.metric = std::string(trim(line.substr(t1 + 1, t2 - t1 - 1)));
    if (std::find(std::begin(kMetricNames), std::end(kMetricNames), v.metric) ==
        std::end(kMetricNames)) {
      throw Error(Errc::invalid_argument,
                  fmt::format("reference line {}: unknown metric '{}'", line_no, v.metric));
    }
    v.hundredths = parse_hundredths(line.substr(t2 + 1), line_no);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<ReferenceCheck> check_against_reference(const DeploymentReport& report,
                                                    const MacroAverage& macro,
                                                    std::span<const ReferenceValue> reference,
                                                    const SpeciesCatalog& catalog) {
  std::vector<ReferenceCheck> out;
  for (const auto& ref : reference) {
    ReferenceCheck check;
    check.published = ref;
    if (ref.label == "MACRO") {
      check.derived = metric_of(macro, ref.metric).hundredths;
    } else {
      const int class_id = catalog.lookup(ref.label);
      auto it = std::find_if(report.per_class.begin(), report.per_class.end(),
                             [&](const ClassMetrics& m) { return m.class_id == class_id; });
      if (it != report.per_class.end()) check.derived = percent_hundredths(metric_of(*it, ref.metric));
    }
    check.consistent = check.derived && *check.derived == ref.hundredths;
    out.push_back(std::move(check));
  }
  return out;
}

std::string format_reference_checks(std::span<const ReferenceCheck> checks,
                                    AveragePolicy policy) {
  std::string out;
  for (const auto& c : checks) {
    out += fmt::format("{}\t{}\t{}\tpublished={}\tderived={}", c.consistent ? "CONSISTENT" : "INCONSISTENT",
                       c.published.label, c.published.metric,
                       format_hundredths(c.published.hundredths), format_hundredths(c.derived));
    if (c.published.label == "MACRO") out += fmt::format("\tpolicy={}", to_string(policy));
    out += '\n';
  }
  return out;
}

}  // namespace trapwatch::eval
