#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lsalign/box.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/model.hpp"
#include "lsalign/synth_data.hpp"

namespace lsalign {

struct Prediction {
  std::vector<double> scores;  // sigmoid(cos / tau) per target label
  std::vector<double> cosines;
  std::size_t argmax = 0;       // lowest index among ties
};

struct Detection {
  std::uint64_t image_id = 0;
  Box box;
  std::size_t label = 0;  // index within the target label space
  std::string label_id;
  double score = 0.0;

  bool operator==(const Detection&) const = default;
};

// Scores an already-projected feature against a label space.
Prediction score_feature(std::span<const double> v, const SubspaceView& target, double tau);
Prediction predict(const ToyModel& model, std::span<const float> raw_feature,
                   const SubspaceView& target, double tau);

// One detection per proposal whose winning score is >= score_threshold, in
// shard order.
std::vector<Detection> predict_batch(const ToyModel& model, const Shard& shard,
                                     const SubspaceView& target, double tau,
                                     double score_threshold);

void write_detections(std::span<const Detection> dets, const std::filesystem::path& path);
std::vector<Detection> read_detections(const std::filesystem::path& path);

}  // namespace lsalign
