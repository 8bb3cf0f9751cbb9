#include "lsalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "lsalign/error.hpp"

namespace lsalign {
namespace {

constexpr int kRecallPoints = 101;
constexpr double kAccuracyIou = 0.5;

void check_box(const Box& b) {
  if (!std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) ||
      !std::isfinite(b.y2) || !(b.x1 < b.x2) || !(b.y1 < b.y2)) {
    fail(ErrorCode::MalformedBox, "box must satisfy x1 < x2 and y1 < y2");
  }
}

bool canonical_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  if (a.box != b.box) return a.box < b.box;
  return a.label < b.label;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  check_box(a);
  check_box(b);
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back((50.0 + 5.0 * i) / 100.0);
  return out;
}

std::optional<double> average_precision(std::span<const ScoredBox> dets,
                                        std::span<const GroundTruth> gts, double iou_thresh,
                                        MatchCounts* counts) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<char> matched(gts.size(), 0);
  std::vector<double> precision, recall;
  precision.reserve(dets.size());
  recall.reserve(dets.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& det = dets[order[k]];
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g].image_id != det.image_id) continue;
      const double overlap = iou(det.box, gts[g].box);
      if (overlap >= iou_thresh && overlap > best) {
        best = overlap;
        best_gt = g;
      }
    }
    if (best_gt < gts.size()) {
      matched[best_gt] = 1;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(gts.empty() ? 0.0
                                 : static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  if (counts) {
    counts->true_positives += tp;
    counts->false_positives += dets.size() - tp;
    counts->false_negatives += gts.size() - tp;
  }
  if (gts.empty()) return std::nullopt;

  // Precision envelope: best precision at any recall to the right.
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double sum = 0.0;
  for (int i = 0; i < kRecallPoints; ++i) {
    const double r = static_cast<double>(i) / (kRecallPoints - 1);
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

EvalReport evaluate(std::span<const Detection> dets_in, const Shard& shard,
                    const SubspaceView& target, const EvalOptions& options) {
  if (shard.dataset != target.name) {
    fail(ErrorCode::LabelSpaceMismatch, "shard '" + shard.dataset +
                                            "' evaluated against label space '" + target.name +
                                            "'");
  }
  const std::size_t m = target.size();
  if (m == 0) fail(ErrorCode::EmptyLabelSpace, "target label space is empty");
  for (const auto& d : dets_in) {
    if (d.label >= m || d.label_id != target.label_ids[d.label]) {
      fail(ErrorCode::LabelSpaceMismatch, "detection label " + std::to_string(d.label) + " ('" +
                                              d.label_id + "') is not in '" + target.name + "'");
    }
    check_box(d.box);
  }
  std::vector<Detection> dets(dets_in.begin(), dets_in.end());
  std::sort(dets.begin(), dets.end(), canonical_before);

  std::vector<std::vector<GroundTruth>> gts(m);
  std::vector<std::vector<ScoredBox>> per_class(m);
  EvalReport report;
  report.dataset = shard.dataset;
  for (const auto& inst : shard.instances) {
    check_box(inst.box);
    if (!inst.local_label) continue;
    if (*inst.local_label >= m) {
      fail(ErrorCode::LabelSpaceMismatch, "ground-truth label " +
                                              std::to_string(*inst.local_label) + " >= " +
                                              std::to_string(m));
    }
    gts[*inst.local_label].push_back({inst.image_id, inst.box});
    ++report.foreground;
  }
  for (const auto& d : dets) per_class[d.label].push_back({d.image_id, d.box, d.score});

  const auto thresholds =
      options.iou50_only ? std::vector<double>{0.5} : coco_iou_thresholds();
  for (std::size_t c = 0; c < m; ++c) {
    report.classes.push_back({c, target.label_ids[c], gts[c].size(), std::nullopt, {}});
  }
  double map_sum = 0.0;
  for (double t : thresholds) {
    ThresholdSummary summary{t, 0.0, {}};
    double class_sum = 0.0;
    std::size_t class_count = 0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto ap = average_precision(per_class[c], gts[c], t, &summary.counts);
      report.classes[c].per_threshold.push_back(ap);
      if (ap) {
        class_sum += *ap;
        ++class_count;
      }
    }
    summary.map = class_count ? class_sum / static_cast<double>(class_count) : 0.0;
    map_sum += summary.map;
    report.thresholds.push_back(summary);
  }
  report.map = map_sum / static_cast<double>(thresholds.size());
  for (auto& cls : report.classes) {
    if (cls.gt_count == 0) continue;
    double s = 0.0;
    for (const auto& ap : cls.per_threshold) s += *ap;
    cls.ap = s / static_cast<double>(cls.per_threshold.size());
  }

  // Accuracy: best-overlapping detection per foreground ground truth; ties go
  // to the earlier detection in canonical order.
  std::size_t correct = 0;
  for (const auto& inst : shard.instances) {
    if (!inst.local_label) continue;
    const Detection* best = nullptr;
    double best_iou = kAccuracyIou;
    for (const auto& d : dets) {
      if (d.image_id != inst.image_id) continue;
      const double overlap = iou(d.box, inst.box);
      if (overlap > best_iou || (overlap == best_iou && !best)) {
        best = &d;
        best_iou = overlap;
      }
    }
    if (best && best->label == *inst.local_label) ++correct;
  }
  report.accuracy = report.foreground
                        ? static_cast<double>(correct) / static_cast<double>(report.foreground)
                        : 0.0;
  report.config = {{"iou50_only", options.iou50_only}, {"thresholds", thresholds}};
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : report.classes) {
    classes.push_back({{"label", c.label},
                       {"label_id", c.label_id},
                       {"gt_count", c.gt_count},
                       {"ap", c.ap ? nlohmann::json(*c.ap) : nlohmann::json(nullptr)}});
  }
  nlohmann::json thresholds = nlohmann::json::array();
  for (const auto& t : report.thresholds) {
    thresholds.push_back({{"iou", t.iou},
                          {"map", t.map},
                          {"tp", t.counts.true_positives},
                          {"fp", t.counts.false_positives},
                          {"fn", t.counts.false_negatives}});
  }
  return {{"dataset", report.dataset},     {"map", report.map},
          {"accuracy", report.accuracy},   {"foreground", report.foreground},
          {"classes", std::move(classes)}, {"thresholds", std::move(thresholds)},
          {"config", report.config}};
}

std::string format_table(const EvalReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "dataset: " << report.dataset << "\n";
  out << "mAP: " << report.map << "  accuracy: " << report.accuracy
      << "  foreground: " << report.foreground << "\n\n";
  std::size_t width = 8;
  for (const auto& c : report.classes) width = std::max(width, c.label_id.size());
  out << std::left << std::setw(static_cast<int>(width)) << "label" << "  " << std::right
      << std::setw(6) << "gts" << "  " << std::setw(8) << "AP" << "\n";
  for (const auto& c : report.classes) {
    out << std::left << std::setw(static_cast<int>(width)) << c.label_id << "  " << std::right
        << std::setw(6) << c.gt_count << "  ";
    if (c.ap) {
      out << std::setw(8) << *c.ap;
    } else {
      out << std::setw(8) << "-";
    }
    out << "\n";
  }
  out << "\n" << std::setw(6) << "IoU" << "  " << std::setw(8) << "mAP" << "  " << std::setw(7)
      << "TP" << "  " << std::setw(7) << "FP" << "  " << std::setw(7) << "FN" << "\n";
  for (const auto& t : report.thresholds) {
    out << std::setw(6) << std::setprecision(2) << t.iou << "  " << std::setprecision(4)
        << std::setw(8) << t.map << "  " << std::setw(7) << t.counts.true_positives << "  "
        << std::setw(7) << t.counts.false_positives << "  " << std::setw(7)
        << t.counts.false_negatives << "\n";
  }
  return out.str();
}

}  // namespace lsalign
