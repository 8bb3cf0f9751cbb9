#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsalign/alignment.hpp"
#include "lsalign/eval.hpp"
#include "lsalign/synth_data.hpp"
#include "lsalign/trainer.hpp"

namespace lsalign {

struct EvalSettings {
  double score_threshold = 0.0;
  bool iou50_only = false;
};

struct ExperimentSettings {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  // Downstream set names used for the two transfer protocols.
  std::string transfer_set;
  std::string zero_shot_set;
};

// One JSON document per pipeline. Unknown keys are rejected; relative paths
// are resolved against the config file's directory.
struct PipelineConfig {
  SynthSpec synth;
  std::vector<DownstreamSpec> downstream;
  TrainConfig train;
  LossConfig loss;
  EvalSettings eval;
  ExperimentSettings experiment;
  std::optional<std::filesystem::path> workdir;

  const DownstreamSpec& downstream_set(const std::string& name) const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);
std::string config_hash(const PipelineConfig& cfg);

// Returns the datasets named in `subset` (all datasets when empty), keeping
// their order from the subset list.
SynthSpec restrict_datasets(const SynthSpec& spec, const std::vector<std::string>& subset);

struct TargetScore {
  double accuracy = 0.0;
  double map = 0.0;
};

struct RunOutcome {
  std::uint64_t seed = 0;
  std::vector<std::string> datasets;
  bool hard_only = false;
  std::map<std::string, TargetScore> upstream;    // eval split, own subspace
  std::map<std::string, TargetScore> downstream;  // direct transfer
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double mean_upstream_accuracy() const;
};

nlohmann::json to_json(const RunOutcome& run);

// Trains on `datasets` (a prefix or any subset of the synthetic corpus) and
// evaluates on each trained dataset's eval split and every downstream set.
RunOutcome run_training(const PipelineConfig& cfg, const SynthCorpus& corpus,
                        const std::vector<DownstreamSet>& downstream,
                        const std::vector<std::string>& datasets, bool hard_only,
                        std::uint64_t seed);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
};
Summary summarize(const std::vector<double>& values);

struct ScalingRow {
  std::size_t k = 0;
  std::vector<std::string> datasets;
  std::vector<std::uint64_t> seeds;
  std::vector<RunOutcome> runs;  // one per seed
  Summary upstream_accuracy;
  Summary upstream_map;
  Summary transfer_accuracy;
  Summary transfer_map;
};

struct ScalingReport {
  std::vector<ScalingRow> rows;  // K = 1..number of datasets
  // dataset -> per-seed single-dataset hard-only baselines
  std::map<std::string, std::vector<RunOutcome>> baselines;
  nlohmann::json config;
};

// Nested K = 1..N runs in dataset order plus per-dataset baselines, across
// every configured seed. When `partial_dir` is set, each finished run is
// written there as JSON.
ScalingReport run_scaling_experiment(const PipelineConfig& cfg,
                                     const std::optional<std::filesystem::path>& partial_dir = {});
nlohmann::json to_json(const ScalingReport& report);

struct AblationReport {
  std::vector<std::uint64_t> seeds;
  std::vector<double> full_accuracy;       // hard + lambda * soft
  std::vector<double> hard_only_accuracy;  // hard term only
  Summary full;
  Summary hard_only;
  double effect_size = 0.0;  // mean difference over pooled sd
  std::size_t seeds_full_not_worse = 0;
  nlohmann::json config;
};

// All datasets, full loss vs hard-only, scored by zero-shot accuracy on the
// configured unseen-concept downstream set.
AblationReport run_ablation(const PipelineConfig& cfg,
                            const std::optional<std::filesystem::path>& partial_dir = {});
nlohmann::json to_json(const AblationReport& report);

}  // namespace lsalign
