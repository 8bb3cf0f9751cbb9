#include "lsalign/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "lsalign/error.hpp"
#include "lsalign/inference.hpp"
#include "lsalign/io.hpp"
#include "lsalign/json_util.hpp"
#include "lsalign/random.hpp"

namespace lsalign {
namespace {

constexpr const char* kCheckpointJson = "ckpt.json";
constexpr const char* kCheckpointBin = "ckpt.bin";

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  fail(ErrorCode::BadConfig, "unknown optimizer '" + name + "'");
}

nlohmann::json to_json(const OptimizerConfig& cfg) {
  return {{"kind", std::string(to_string(cfg.kind))},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps}};
}

OptimizerConfig optimizer_from_json(const nlohmann::json& doc) {
  StrictObject obj(doc, "train.optimizer");
  OptimizerConfig cfg;
  cfg.kind = optimizer_kind_from_string(obj.get<std::string>("kind", "adam"));
  cfg.beta1 = obj.get("beta1", cfg.beta1);
  cfg.beta2 = obj.get("beta2", cfg.beta2);
  cfg.eps = obj.get("eps", cfg.eps);
  obj.finish();
  return cfg;
}

struct Region {
  const SynthInstance* instance;
  std::optional<std::size_t> global_label;
};

struct Image {
  std::vector<Region> regions;
};

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) fail(ErrorCode::BadConfig, "train.steps must be >= 1");
  if (batch_size < 1) fail(ErrorCode::BadConfig, "train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail(ErrorCode::BadConfig, "train.learning_rate must be > 0");
  if (!(rfs_threshold > 0.0 && rfs_threshold <= 1.0)) {
    fail(ErrorCode::BadConfig, "train.rfs_threshold must lie in (0, 1]");
  }
  if (optimizer.kind == OptimizerKind::Adam &&
      !(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 &&
        optimizer.beta2 < 1.0 && optimizer.eps > 0.0)) {
    fail(ErrorCode::BadConfig, "train.optimizer: betas must lie in [0, 1) and eps > 0");
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"steps", cfg.steps},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", to_json(cfg.optimizer)},
          {"rfs_threshold", cfg.rfs_threshold},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every},
          {"hard_only", cfg.hard_only}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  StrictObject obj(doc, "train");
  TrainConfig cfg;
  cfg.steps = obj.get("steps", cfg.steps);
  cfg.batch_size = obj.get("batch_size", cfg.batch_size);
  cfg.learning_rate = obj.get("learning_rate", cfg.learning_rate);
  cfg.optimizer = optimizer_from_json(obj.child("optimizer"));
  cfg.rfs_threshold = obj.get("rfs_threshold", cfg.rfs_threshold);
  cfg.seed = obj.get("seed", cfg.seed);
  cfg.checkpoint_every = obj.get("checkpoint_every", cfg.checkpoint_every);
  cfg.hard_only = obj.get("hard_only", cfg.hard_only);
  obj.finish();
  cfg.validate();
  return cfg;
}

Optimizer::Optimizer(const OptimizerConfig& config, double learning_rate,
                     std::size_t parameter_count) {
  state_.config = config;
  state_.learning_rate = learning_rate;
  if (config.kind == OptimizerKind::Adam) {
    state_.first_moment.assign(parameter_count, 0.0f);
    state_.second_moment.assign(parameter_count, 0.0f);
  }
}

Optimizer::Optimizer(OptimizerState state) : state_(std::move(state)) {}

void Optimizer::step(std::span<float> params, std::span<const double> grad) {
  if (params.size() != grad.size()) {
    fail(ErrorCode::DimMismatch, "optimizer: parameter and gradient sizes differ");
  }
  ++state_.step;
  const double lr = state_.learning_rate;
  if (state_.config.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] = static_cast<float>(params[i] - lr * grad[i]);
    }
    return;
  }
  if (state_.first_moment.size() != params.size()) {
    fail(ErrorCode::DimMismatch, "optimizer: moment buffers do not match parameters");
  }
  const auto& c = state_.config;
  const double t = static_cast<double>(state_.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double m = c.beta1 * state_.first_moment[i] + (1.0 - c.beta1) * grad[i];
    const double v = c.beta2 * state_.second_moment[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    state_.first_moment[i] = static_cast<float>(m);
    state_.second_moment[i] = static_cast<float>(v);
    const double m_hat = m / bias1;
    const double v_hat = v / bias2;
    params[i] = static_cast<float>(params[i] - lr * m_hat / (std::sqrt(v_hat) + c.eps));
  }
}

std::vector<double> repeat_factors(std::span<const std::vector<std::size_t>> image_classes,
                                   double threshold) {
  if (image_classes.empty()) fail(ErrorCode::EmptyCorpus, "no images to sample from");
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::BadConfig, "repeat-factor threshold must lie in (0, 1]");
  }
  std::map<std::size_t, std::size_t> images_with;
  for (const auto& classes : image_classes) {
    const std::set<std::size_t> unique(classes.begin(), classes.end());
    for (std::size_t c : unique) ++images_with[c];
  }
  const double image_count = static_cast<double>(image_classes.size());
  std::map<std::size_t, double> class_factor;
  for (const auto& [c, count] : images_with) {
    const double freq = static_cast<double>(count) / image_count;
    class_factor[c] = std::max(1.0, std::sqrt(threshold / freq));
  }
  std::vector<double> weights(image_classes.size(), 1.0);
  for (std::size_t i = 0; i < image_classes.size(); ++i) {
    for (std::size_t c : image_classes[i]) weights[i] = std::max(weights[i], class_factor[c]);
  }
  return weights;
}

double classification_accuracy(const ToyModel& model, const Shard& shard,
                               const SubspaceView& target, double tau) {
  std::size_t total = 0, correct = 0;
  for (const auto& inst : shard.instances) {
    if (!inst.local_label) continue;
    ++total;
    if (predict(model, inst.raw_feature, target, tau).argmax == *inst.local_label) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(const ToyModel& init, const UnifiedLabelSpace& space,
                  const SimilarityMatrix& sim, std::span<const Shard> shards,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  init.loss.validate();
  const auto started = std::chrono::steady_clock::now();
  if (sim.source_checksum != embedding_checksum(space.embeddings) || sim.n != space.size()) {
    fail(ErrorCode::ChecksumMismatch, "similarity matrix was not built from this label space");
  }
  if (init.dim != space.dim) {
    fail(ErrorCode::DimMismatch, "model projects to dim " + std::to_string(init.dim) +
                                     ", label space has dim " + std::to_string(space.dim));
  }

  // Flatten every shard into images of regions with unified label indices.
  std::vector<Image> images;
  std::vector<std::vector<std::size_t>> image_classes;
  for (const auto& shard : shards) {
    const auto& src = space.source(shard.dataset);
    if (shard.dim != init.feature_dim) {
      fail(ErrorCode::DimMismatch, "shard '" + shard.dataset + "' features have dim " +
                                       std::to_string(shard.dim));
    }
    std::map<std::uint64_t, std::size_t> image_slot;
    for (const auto& inst : shard.instances) {
      auto [it, inserted] = image_slot.try_emplace(inst.image_id, images.size());
      if (inserted) {
        images.emplace_back();
        image_classes.emplace_back();
      }
      Region region{&inst, std::nullopt};
      if (inst.local_label) {
        if (*inst.local_label >= src.count) {
          fail(ErrorCode::LabelSpaceMismatch, "shard '" + shard.dataset + "' label " +
                                                  std::to_string(*inst.local_label) +
                                                  " is outside its label set");
        }
        region.global_label = src.offset + *inst.local_label;
        image_classes[it->second].push_back(*region.global_label);
      }
      images[it->second].regions.push_back(region);
    }
  }
  const auto weights = repeat_factors(image_classes, cfg.rfs_threshold);
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) cdf[i] = (acc += weights[i]);

  TrainResult result;
  result.model = init;
  ToyModel& model = result.model;
  model.space_checksum = space.checksum();
  const std::size_t dim = model.dim, fdim = model.feature_dim;
  const std::size_t w_count = dim * fdim;
  Optimizer optimizer(cfg.optimizer, cfg.learning_rate, w_count + dim);
  std::vector<float> params(w_count + dim);
  std::vector<double> grad(params.size());

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    StreamRng rng{cfg.seed, 0x5a3fu, step};
    std::fill(grad.begin(), grad.end(), 0.0);
    double hard = 0.0, soft = 0.0, total = 0.0;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const double u = rng.uniform() * acc;
      const auto pick = std::min<std::size_t>(
          static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()),
          cdf.size() - 1);
      const auto& regions = images[pick].regions;
      const Region& region = regions[rng.below(regions.size())];
      const auto& raw = region.instance->raw_feature;
      const auto v = model.project(raw);
      const HardTarget target{region.global_label};
      const LossValue loss =
          cfg.hard_only
              ? hard_only_loss(v, space.embeddings, target, model.loss)
              : language_loss(v, space.embeddings, target,
                              region.global_label ? sim.row(*region.global_label)
                                                  : std::span<const float>{},
                              model.loss);
      if (!std::isfinite(loss.total)) {
        fail(ErrorCode::NonFiniteLoss,
             "step " + std::to_string(step) + ", image " +
                 std::to_string(region.instance->image_id) + ", instance " +
                 std::to_string(region.instance->instance) + ": hard=" +
                 std::to_string(loss.hard) + " soft=" + std::to_string(loss.soft));
      }
      hard += loss.hard;
      soft += loss.soft;
      total += loss.total;
      for (std::size_t r = 0; r < dim; ++r) {
        const double g = loss.grad_v[r];
        double* gw = grad.data() + r * fdim;
        for (std::size_t c = 0; c < fdim; ++c) gw[c] += g * raw[c];
        grad[w_count + r] += g;
      }
    }
    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    for (double& g : grad) g *= inv_b;

    std::copy(model.weight.begin(), model.weight.end(), params.begin());
    std::copy(model.bias.begin(), model.bias.end(), params.begin() + static_cast<long>(w_count));
    optimizer.step(params, grad);
    std::copy(params.begin(), params.begin() + static_cast<long>(w_count), model.weight.begin());
    std::copy(params.begin() + static_cast<long>(w_count), params.end(), model.bias.begin());

    const StepRecord record{step, hard * inv_b, soft * inv_b, total * inv_b, cfg.learning_rate};
    result.report.trace.push_back(record);
    if (hooks.on_step) hooks.on_step(record);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(step + 1, model, optimizer.state());
    }
  }

  for (const auto& shard : shards) {
    result.report.train_accuracy[shard.dataset] =
        classification_accuracy(model, shard, subspace(space, shard.dataset), model.loss.tau);
  }
  result.optimizer = optimizer.state();
  result.report.config = {{"train", to_json(cfg)}, {"loss", to_json(model.loss)}};
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void save_checkpoint(const std::filesystem::path& dir, const ToyModel& model,
                     const OptimizerState& optimizer, const nlohmann::json& extra) {
  io::ensure_directory(dir);
  const std::size_t block = model.weight.size() + model.bias.size();
  const bool has_moments = !optimizer.first_moment.empty();
  if (has_moments && (optimizer.first_moment.size() != block ||
                      optimizer.second_moment.size() != block)) {
    fail(ErrorCode::DimMismatch, "optimizer moments do not match model parameters");
  }
  std::vector<float> payload;
  payload.reserve(block * (has_moments ? 3 : 1));
  payload.insert(payload.end(), model.weight.begin(), model.weight.end());
  payload.insert(payload.end(), model.bias.begin(), model.bias.end());
  if (has_moments) {
    payload.insert(payload.end(), optimizer.first_moment.begin(), optimizer.first_moment.end());
    payload.insert(payload.end(), optimizer.second_moment.begin(), optimizer.second_moment.end());
  }
  const auto rows = static_cast<std::uint32_t>(has_moments ? 3 : 1);
  io::write_lseb(dir / kCheckpointBin, rows, static_cast<std::uint32_t>(block), payload);

  nlohmann::json doc = {{"dim", model.dim},
                        {"feature_dim", model.feature_dim},
                        {"loss", to_json(model.loss)},
                        {"space_checksum", model.space_checksum},
                        {"blocks", has_moments ? nlohmann::json{"params", "adam_m", "adam_v"}
                                               : nlohmann::json{"params"}},
                        {"optimizer",
                         {{"config", to_json(optimizer.config)},
                          {"learning_rate", optimizer.learning_rate},
                          {"step", optimizer.step}}}};
  if (!extra.is_null()) doc["extra"] = extra;
  io::write_json(dir / kCheckpointJson, doc);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           const std::optional<std::string>& expected_space_checksum,
                           bool allow_space_swap) {
  const auto doc = io::read_json(dir / kCheckpointJson);
  Checkpoint ckpt;
  ToyModel& model = ckpt.model;
  try {
    model.dim = doc.at("dim").get<std::size_t>();
    model.feature_dim = doc.at("feature_dim").get<std::size_t>();
    model.loss = loss_config_from_json(doc.at("loss"));
    model.space_checksum = doc.at("space_checksum").get<std::string>();
    const auto& opt = doc.at("optimizer");
    ckpt.optimizer.config = optimizer_from_json(opt.at("config"));
    ckpt.optimizer.learning_rate = opt.at("learning_rate").get<double>();
    ckpt.optimizer.step = opt.at("step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, (dir / kCheckpointJson).string() + ": " + e.what());
  }
  if (expected_space_checksum && *expected_space_checksum != model.space_checksum &&
      !allow_space_swap) {
    fail(ErrorCode::ChecksumMismatch, "checkpoint was trained against label space " +
                                          model.space_checksum + ", not " +
                                          *expected_space_checksum);
  }
  const auto block = io::read_lseb(dir / kCheckpointBin);
  const std::size_t w_count = model.dim * model.feature_dim;
  const std::size_t width = w_count + model.dim;
  if (block.cols != width || (block.rows != 1 && block.rows != 3)) {
    fail(ErrorCode::DimMismatch, "ckpt.bin layout disagrees with ckpt.json dimensions");
  }
  const auto begin = block.data.begin();
  model.weight.assign(begin, begin + static_cast<long>(w_count));
  model.bias.assign(begin + static_cast<long>(w_count), begin + static_cast<long>(width));
  if (block.rows == 3) {
    ckpt.optimizer.first_moment.assign(begin + static_cast<long>(width),
                                       begin + static_cast<long>(2 * width));
    ckpt.optimizer.second_moment.assign(begin + static_cast<long>(2 * width), block.data.end());
  }
  for (float x : block.data) {
    if (!std::isfinite(x)) fail(ErrorCode::NonFiniteEntry, "checkpoint has non-finite values");
  }
  return ckpt;
}

}  // namespace lsalign
