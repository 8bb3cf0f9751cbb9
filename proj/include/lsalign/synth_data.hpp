#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsalign/box.hpp"
#include "lsalign/embedding_store.hpp"

namespace lsalign {

struct DatasetSpec {
  std::string name;
  std::vector<std::size_t> prototype_subset;  // concept ids, in label order
  // D x D row-major. Left empty, it is generated from `domain_shift`.
  std::vector<double> domain_transform;
  double domain_shift = 0.0;
  std::size_t images = 100;
  std::size_t eval_images = 0;
  double class_frequency = 0.0;  // power-law exponent over the subset order
};

struct SynthSpec {
  std::uint64_t seed = 0;
  std::size_t n_prototypes = 16;
  std::size_t dim = 16;
  // When in (0, dim), prototypes are drawn from a random rank-r subspace.
  std::size_t latent_rank = 0;
  double noise_text = 0.0;
  double noise_feat = 0.0;
  double background_rate = 0.0;
  double canvas = 1000.0;
  std::size_t min_boxes = 1;
  std::size_t max_boxes = 8;
  std::vector<DatasetSpec> datasets;
};

// A held-out evaluation set: unseen concepts (zero-shot) and/or a domain
// transform no training dataset uses.
struct DownstreamSpec {
  std::string name;
  std::vector<std::size_t> concepts;
  bool zero_shot = false;
  double domain_shift = 0.0;
  std::size_t images = 100;
  double class_frequency = 0.0;
};

struct SynthInstance {
  std::uint64_t image_id = 0;
  std::uint32_t instance = 0;
  Box box;
  std::optional<std::size_t> local_label;  // absent for background
  std::vector<float> raw_feature;

  bool operator==(const SynthInstance&) const = default;
};

struct Shard {
  std::string dataset;
  std::string spec_hash;
  std::size_t dim = 0;
  std::vector<SynthInstance> instances;

  bool operator==(const Shard&) const = default;
};

struct SynthCorpus {
  SynthSpec spec;  // resolved: every domain_transform filled in
  EmbeddingMatrix prototypes;
  std::vector<LabeledEmbeddings> labelsets;
  std::vector<Shard> train_shards;
  std::vector<Shard> eval_shards;
  // dataset name -> concept id of each local label
  std::map<std::string, std::vector<std::size_t>> oracle;
};

struct DownstreamSet {
  LabeledEmbeddings labels;
  Shard shard;
  std::vector<std::size_t> concepts;
};

inline constexpr double kMaxTransformCondition = 10.0;

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const DownstreamSpec& spec);
DownstreamSpec downstream_spec_from_json(const nlohmann::json& doc);

// Fills missing transforms and checks every invariant; throws InvalidSpec.
SynthSpec resolve(const SynthSpec& spec);
std::string spec_hash(const SynthSpec& spec);

EmbeddingMatrix generate_prototypes(const SynthSpec& spec);
SynthCorpus generate(const SynthSpec& spec);
DownstreamSet split_unseen(const SynthSpec& spec, const DownstreamSpec& downstream);

// Newline-delimited JSON: one header line, then one record per instance with
// the feature stored as base64 of its little-endian float32 payload.
void write_shard(const Shard& shard, const std::filesystem::path& path);
Shard read_shard(const std::filesystem::path& path);

}  // namespace lsalign
