#include "lsalign/model.hpp"

#include <cmath>

#include "lsalign/error.hpp"
#include "lsalign/random.hpp"

namespace lsalign {

std::vector<double> ToyModel::project(std::span<const float> raw) const {
  if (raw.size() != feature_dim) {
    fail(ErrorCode::DimMismatch, "raw feature has dim " + std::to_string(raw.size()) +
                                     ", model expects " + std::to_string(feature_dim));
  }
  std::vector<double> v(dim);
  for (std::size_t r = 0; r < dim; ++r) {
    const float* w = weight.data() + r * feature_dim;
    double acc = bias[r];
    for (std::size_t c = 0; c < feature_dim; ++c) acc += static_cast<double>(w[c]) * raw[c];
    v[r] = acc;
  }
  return v;
}

ToyModel init_model(std::size_t dim, std::size_t feature_dim, const LossConfig& loss,
                    std::uint64_t seed, std::string space_checksum) {
  if (dim == 0 || feature_dim == 0) {
    fail(ErrorCode::DimMismatch, "model dimensions must be positive");
  }
  loss.validate();
  ToyModel model;
  model.dim = dim;
  model.feature_dim = feature_dim;
  model.loss = loss;
  model.space_checksum = std::move(space_checksum);
  model.weight.resize(dim * feature_dim);
  model.bias.assign(dim, 0.0f);
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  StreamRng rng{seed, 0x1217u};
  for (float& w : model.weight) w = static_cast<float>(rng.uniform(-bound, bound));
  return model;
}

}  // namespace lsalign
