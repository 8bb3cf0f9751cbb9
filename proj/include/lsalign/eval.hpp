#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsalign/box.hpp"
#include "lsalign/inference.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/synth_data.hpp"

namespace lsalign {

struct ScoredBox {
  std::uint64_t image_id = 0;
  Box box;
  double score = 0.0;
};

struct GroundTruth {
  std::uint64_t image_id = 0;
  Box box;
};

struct MatchCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

double iou(const Box& a, const Box& b);

// Greedy matching in descending score order: each detection takes the
// unmatched same-image ground truth with the highest IoU >= iou_thresh
// (earlier ground truth wins ties). Returns 101-point interpolated AP, or
// nullopt when there is no ground truth.
std::optional<double> average_precision(std::span<const ScoredBox> dets,
                                        std::span<const GroundTruth> gts, double iou_thresh,
                                        MatchCounts* counts = nullptr);

// {0.50, 0.55, ..., 0.95}
std::vector<double> coco_iou_thresholds();

struct EvalOptions {
  bool iou50_only = false;
};

struct ClassAp {
  std::size_t label = 0;
  std::string label_id;
  std::size_t gt_count = 0;
  std::optional<double> ap;                        // mean over thresholds
  std::vector<std::optional<double>> per_threshold;
};

struct ThresholdSummary {
  double iou = 0.0;
  double map = 0.0;
  MatchCounts counts;
};

struct EvalReport {
  std::string dataset;
  std::vector<ClassAp> classes;
  std::vector<ThresholdSummary> thresholds;
  double map = 0.0;
  double accuracy = 0.0;
  std::size_t foreground = 0;
  nlohmann::json config;
};

// mAP is the mean over classes with ground truth, then over thresholds.
// Accuracy counts foreground ground truths whose best-overlapping detection
// (IoU >= 0.5) carries the right label.
EvalReport evaluate(std::span<const Detection> dets, const Shard& shard,
                    const SubspaceView& target, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
std::string format_table(const EvalReport& report);

}  // namespace lsalign
