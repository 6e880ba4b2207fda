#pragma once

#include <random>
#include <vector>

#include "oracles.hpp"
#include "trapwatch/core/box.hpp"
#include "trapwatch/eval/records.hpp"

namespace trapwatch::test {

inline BoundingBox to_box(const oracle::IBox& b) {
  return BoundingBox{double(b.x0), double(b.y0), double(b.x1), double(b.y1)};
}

struct Instance {
  std::vector<oracle::Pred> opreds;
  std::vector<oracle::Truth> otruths;
  std::vector<eval::ScoredPrediction> preds;
  std::vector<eval::GroundTruth> truths;
};

inline Instance random_instance(std::mt19937_64& rng, int max_preds, int max_truths, int classes) {
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto box = [&] {
    int x0 = uni(0, 8), y0 = uni(0, 8);
    return oracle::IBox{x0, y0, x0 + uni(1, 6), y0 + uni(1, 6)};
  };
  Instance in;
  const int np = uni(0, max_preds), nt = uni(0, max_truths);
  for (int i = 0; i < nt; ++i) {
    oracle::Truth t{uni(0, 1) ? "a" : "b", uni(0, classes - 1), box()};
    in.otruths.push_back(t);
    in.truths.push_back({t.image, t.cls, to_box(t.box)});
  }
  for (int i = 0; i < np; ++i) {
    oracle::IBox b = box();
    // Half the time start from a truth box so matches are common.
    if (!in.otruths.empty() && uni(0, 1)) {
      b = in.otruths[uni(0, nt - 1)].box;
      b.x1 += uni(0, 1);
    }
    oracle::Pred p{uni(0, 1) ? "a" : "b", uni(0, classes - 1), uni(1, 10) * 10, b};
    in.opreds.push_back(p);
    in.preds.push_back({p.image, p.cls, p.conf_pct / 100.0, to_box(p.box)});
  }
  return in;
}

}  // namespace trapwatch::test
