#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/model.hpp"
#include "lsalign/similarity.hpp"
#include "lsalign/synth_data.hpp"

namespace lsalign {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const OptimizerConfig&) const = default;
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  OptimizerConfig optimizer;
  double rfs_threshold = 0.001;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // 0 disables intermediate checkpoints
  bool hard_only = false;            // skip the soft term entirely

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct OptimizerState {
  OptimizerConfig config;
  double learning_rate = 0.0;
  std::uint64_t step = 0;
  std::vector<float> first_moment;
  std::vector<float> second_moment;

  bool operator==(const OptimizerState&) const = default;
};

// Updates a flat float parameter vector from a double-precision gradient.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, double learning_rate, std::size_t parameter_count);
  explicit Optimizer(OptimizerState state);

  void step(std::span<float> params, std::span<const double> grad);
  const OptimizerState& state() const { return state_; }

 private:
  OptimizerState state_;
};

struct StepRecord {
  std::size_t step = 0;
  double hard = 0.0;
  double soft = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> trace;
  std::map<std::string, double> train_accuracy;  // per dataset, own subspace
  double wall_seconds = 0.0;
  nlohmann::json config;
};

struct TrainResult {
  ToyModel model;
  OptimizerState optimizer;
  TrainReport report;
};

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(std::size_t step, const ToyModel&, const OptimizerState&)> on_checkpoint;
};

// Image weights r(I) = max over classes c in I of max(1, sqrt(t / f(c))),
// f(c) = fraction of images containing c. Images without classes get 1.
std::vector<double> repeat_factors(std::span<const std::vector<std::size_t>> image_classes,
                                   double threshold);

// Multi-dataset training of the projection head against a unified label
// space. Shards are addressed through their dataset name; their local labels
// are offset into the unified space.
TrainResult train(const ToyModel& init, const UnifiedLabelSpace& space,
                  const SimilarityMatrix& sim, std::span<const Shard> shards,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

// Fraction of foreground instances whose argmax over `target` equals the
// ground-truth label (local labels index `target` directly).
double classification_accuracy(const ToyModel& model, const Shard& shard,
                               const SubspaceView& target, double tau);

struct Checkpoint {
  ToyModel model;
  OptimizerState optimizer;
};

// ckpt.json (dims, loss config, space checksum, optimizer metadata) and
// ckpt.bin (LSEB, one row per block: [W, b], then Adam moments).
void save_checkpoint(const std::filesystem::path& dir, const ToyModel& model,
                     const OptimizerState& optimizer, const nlohmann::json& extra = {});
// Refuses a checkpoint trained against another space unless
// allow_space_swap is set.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<std::string>& expected_space_checksum = {},
                           bool allow_space_swap = false);

}  // namespace lsalign
