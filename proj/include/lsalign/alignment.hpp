#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "lsalign/embedding_store.hpp"

namespace lsalign {

struct LossConfig {
  double tau = 0.07;       // temperature on the cosine logits
  double lambda = 10.0;    // weight of the soft-assignment term
  double bce_clamp = 1e-7;  // probabilities are clamped to [eps, 1 - eps]

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& doc);

// Cosine between one region feature and every label embedding.
struct AlignmentScores {
  std::vector<double> c;
  double v_norm = 0.0;
  std::size_t n = 0;
  std::size_t dim = 0;
};

// Absent positive index means a background region.
struct HardTarget {
  std::optional<std::size_t> positive_index;
};

struct LossValue {
  double hard = 0.0;
  double soft = 0.0;
  double total = 0.0;
  std::vector<double> grad_c;
  std::vector<double> grad_v;
};

struct PartialLoss {
  double value = 0.0;
  std::vector<double> grad_c;
};

AlignmentScores score(std::span<const double> v, const EmbeddingMatrix& emb);

// One-vs-all sigmoid BCE on c / tau against a one-hot (or all-zero) target,
// mean over labels. Gradient is zero where the probability was clamped.
PartialLoss hard_loss(const AlignmentScores& scores, const HardTarget& target,
                      const LossConfig& cfg);

// Mean squared error between the cosine row and the label's similarity row.
PartialLoss soft_loss(const AlignmentScores& scores, std::span<const float> s_row);

// hard + lambda * soft, with the gradient pulled back to the feature through
// the cosine Jacobian. Background regions (no positive) have no soft term and
// `s_row` may then be empty.
LossValue language_loss(std::span<const double> v, const EmbeddingMatrix& emb,
                        const HardTarget& target, std::span<const float> s_row,
                        const LossConfig& cfg);

// Same as language_loss with the soft term never evaluated.
LossValue hard_only_loss(std::span<const double> v, const EmbeddingMatrix& emb,
                         const HardTarget& target, const LossConfig& cfg);

// grad_v = J^T grad_c, J[j] = t_j / (|v||t_j|) - c_j v / |v|^2.
std::vector<double> pullback_to_feature(std::span<const double> v, const EmbeddingMatrix& emb,
                                        const AlignmentScores& scores,
                                        std::span<const double> grad_c);

double sigmoid(double x);

}  // namespace lsalign
