#pragma once

// Slow, direct re-derivations used to check the library implementations.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "lsalign/eval.hpp"

namespace oracle {

inline double box_iou(const lsalign::Box& a, const lsalign::Box& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / uni;
}

// Precision/recall after every rank, then for each of the 101 recall levels
// the best precision over all ranks reaching that recall.
inline std::optional<double> average_precision(const std::vector<lsalign::ScoredBox>& dets,
                                               const std::vector<lsalign::GroundTruth>& gts,
                                               double thresh) {
  if (gts.empty()) return std::nullopt;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) order.push_back(i);
  // insertion sort keeps equal scores in input order
  for (std::size_t i = 1; i < order.size(); ++i) {
    for (std::size_t j = i; j > 0 && dets[order[j]].score > dets[order[j - 1]].score; --j) {
      std::swap(order[j], order[j - 1]);
    }
  }
  std::vector<bool> used(gts.size(), false);
  std::vector<double> prec, rec;
  int tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& d = dets[order[k]];
    int pick = -1;
    double best = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].image_id != d.image_id) continue;
      const double o = box_iou(d.box, gts[g].box);
      if (o >= thresh && (pick < 0 || o > best)) {
        pick = static_cast<int>(g);
        best = o;
      }
    }
    if (pick >= 0) {
      used[pick] = true;
      ++tp;
    }
    prec.push_back(tp / static_cast<double>(k + 1));
    rec.push_back(tp / static_cast<double>(gts.size()));
  }
  double sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = static_cast<double>(i) / 100;
    double p = 0.0;
    for (std::size_t k = 0; k < prec.size(); ++k) {
      if (rec[k] >= r) p = std::max(p, prec[k]);
    }
    sum += p;
  }
  return sum / 101;
}

inline std::vector<double> repeat_factors(const std::vector<std::vector<std::size_t>>& images,
                                          double t) {
  std::map<std::size_t, double> present;
  for (const auto& classes : images) {
    const std::set<std::size_t> uniq(classes.begin(), classes.end());
    for (auto c : uniq) present[c] += 1.0;
  }
  std::vector<double> out;
  for (const auto& classes : images) {
    double r = 1.0;
    for (auto c : classes) {
      const double f = present[c] / static_cast<double>(images.size());
      r = std::max(r, std::max(1.0, std::sqrt(t / f)));
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace oracle
