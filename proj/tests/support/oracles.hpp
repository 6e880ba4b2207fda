#pragma once
// Independent reference implementations. They share no code with the
// library: boxes are integer rectangles, overlaps are counted cell by cell,
// and every comparison on IoU is done in exact integer arithmetic.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace trapwatch::test::oracle {

struct IBox {
  int x0, y0, x1, y1;  // half-open cell ranges [x0,x1) x [y0,y1)
};

struct Pred {
  std::string image;
  int cls;
  int conf_pct;  // confidence in whole percent
  IBox box;
};

struct Truth {
  std::string image;
  int cls;
  IBox box;
};

/// Unit cells covered by both boxes, counted one by one.
inline std::int64_t overlap_cells(const IBox& a, const IBox& b) {
  std::int64_t n = 0;
  for (int x = std::min(a.x0, b.x0); x < std::max(a.x1, b.x1); ++x) {
    for (int y = std::min(a.y0, b.y0); y < std::max(a.y1, b.y1); ++y) {
      const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
      const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
      if (in_a && in_b) ++n;
    }
  }
  return n;
}

inline std::int64_t cells(const IBox& a) {
  return static_cast<std::int64_t>(std::max(0, a.x1 - a.x0)) * std::max(0, a.y1 - a.y0);
}

/// IoU as an exact fraction (num, den).
struct Fraction {
  std::int64_t num;
  std::int64_t den;
};

inline Fraction iou(const IBox& a, const IBox& b) {
  const auto inter = overlap_cells(a, b);
  const auto uni = cells(a) + cells(b) - inter;
  return {inter, uni == 0 ? 1 : uni};
}

inline bool less(const Fraction& a, const Fraction& b) { return a.num * b.den < b.num * a.den; }

/// iou >= pct / 100
inline bool at_least(const Fraction& f, int pct) { return f.num * 100 >= static_cast<std::int64_t>(pct) * f.den; }

/// Rank order by the documented ranking key.
inline std::vector<std::size_t> rank(const std::vector<Pred>& preds) {
  std::vector<std::size_t> idx(preds.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t i) {
    const auto& p = preds[i];
    return std::make_tuple(-p.conf_pct, p.image, p.box.x0, p.box.y0, p.box.x1, p.box.y1, p.cls);
  };
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  return idx;
}

struct Match {
  std::vector<std::optional<std::size_t>> pred_to_truth;
};

/// Greedy matching, spelled out: each prediction in rank order scans every
/// truth and takes the best free eligible one.
inline Match greedy(const std::vector<Pred>& preds, const std::vector<Truth>& truths, int iou_pct,
                    bool same_class) {
  Match m;
  m.pred_to_truth.assign(preds.size(), std::nullopt);
  std::vector<bool> taken(truths.size(), false);
  for (std::size_t pi : rank(preds)) {
    std::optional<std::size_t> best;
    Fraction best_iou{0, 1};
    for (std::size_t ti = 0; ti < truths.size(); ++ti) {
      if (taken[ti] || truths[ti].image != preds[pi].image) continue;
      if (same_class && truths[ti].cls != preds[pi].cls) continue;
      const auto f = iou(preds[pi].box, truths[ti].box);
      if (!at_least(f, iou_pct)) continue;
      if (!best || less(best_iou, f)) {
        best = ti;
        best_iou = f;
      }
    }
    if (best) {
      taken[*best] = true;
      m.pred_to_truth[pi] = best;
    }
  }
  return m;
}

/// Micro precision, recall and F1 at one cut-off, by re-matching only the
/// surviving predictions. NaN marks 0/0.
struct Point {
  double precision, recall, f1;
};

inline Point at_threshold(const std::vector<Pred>& preds, const std::vector<Truth>& truths,
                          double threshold, int iou_pct) {
  std::vector<Pred> kept;
  for (const auto& p : preds) {
    if (p.conf_pct / 100.0 >= threshold) kept.push_back(p);
  }
  const auto m = greedy(kept, truths, iou_pct, true);
  std::size_t tp = 0;
  for (const auto& t : m.pred_to_truth) tp += t ? 1 : 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double dtp = static_cast<double>(tp);
  const double np = static_cast<double>(kept.size());
  const double nt = static_cast<double>(truths.size());
  return {np > 0 ? dtp / np : nan, nt > 0 ? dtp / nt : nan,
          np + nt > 0 ? 2.0 * dtp / (np + nt) : nan};
}

/// All-points AP for one class by enumerating ranks: at each rank k the
/// precision envelope is the best precision at any rank >= k.
struct ApValue {
  std::optional<double> as_double;
  std::optional<boost::multiprecision::cpp_rational> exact;
};

inline ApValue average_precision(const std::vector<Pred>& preds, const std::vector<Truth>& truths,
                                 int cls, int iou_pct) {
  std::vector<Pred> cp;
  std::vector<Truth> ct;
  for (const auto& p : preds) {
    if (p.cls == cls) cp.push_back(p);
  }
  for (const auto& t : truths) {
    if (t.cls == cls) ct.push_back(t);
  }
  if (ct.empty()) return {};
  const auto order = rank(cp);
  const auto n = order.size();
  // Matching a rank prefix reproduces the full matching on that prefix, so
  // each rank's hit is recomputed from scratch over the top k+1 predictions.
  std::vector<std::size_t> tp_at(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<Pred> top;
    for (std::size_t j = 0; j <= k; ++j) top.push_back(cp[order[j]]);
    const auto m = greedy(top, ct, iou_pct, true);
    std::size_t tp = 0;
    for (const auto& t : m.pred_to_truth) tp += t ? 1 : 0;
    tp_at[k] = tp;
  }
  using boost::multiprecision::cpp_rational;
  double ap = 0.0;
  double prev = 0.0;
  cpp_rational exact = 0;
  cpp_rational prev_exact = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double r = static_cast<double>(tp_at[k]) / static_cast<double>(ct.size());
    double pmax = 0.0;
    cpp_rational pmax_exact = 0;
    for (std::size_t j = k; j < n; ++j) {
      pmax = std::max(pmax, static_cast<double>(tp_at[j]) / static_cast<double>(j + 1));
      pmax_exact = std::max(pmax_exact, cpp_rational(static_cast<long long>(tp_at[j]),
                                                     static_cast<long long>(j + 1)));
    }
    ap += (r - prev) * pmax;
    prev = r;
    const cpp_rational r_exact(static_cast<long long>(tp_at[k]), static_cast<long long>(ct.size()));
    exact += (r_exact - prev_exact) * pmax_exact;
    prev_exact = r_exact;
  }
  return {ap, exact};
}

}  // namespace trapwatch::test::oracle
