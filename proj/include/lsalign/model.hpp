#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lsalign/alignment.hpp"

namespace lsalign {

// Linear projection head v = W raw + b that maps raw region features into the
// text-embedding space. W is dim x feature_dim, row-major.
struct ToyModel {
  std::size_t dim = 0;
  std::size_t feature_dim = 0;
  std::vector<float> weight;
  std::vector<float> bias;
  LossConfig loss;
  std::string space_checksum;

  std::vector<double> project(std::span<const float> raw) const;
  bool operator==(const ToyModel&) const = default;
};

// W ~ U(-1/sqrt(F), 1/sqrt(F)), b = 0.
ToyModel init_model(std::size_t dim, std::size_t feature_dim, const LossConfig& loss,
                    std::uint64_t seed, std::string space_checksum);

}  // namespace lsalign
