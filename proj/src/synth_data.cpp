#include "lsalign/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "lsalign/error.hpp"
#include "lsalign/io.hpp"
#include "lsalign/json_util.hpp"
#include "lsalign/parallel.hpp"
#include "lsalign/random.hpp"

namespace lsalign {
namespace {

// Stream tags for StreamRng keys.
enum : std::uint64_t {
  kPrototypeStream = 1,
  kBasisStream = 2,
  kTextStream = 3,
  kTransformStream = 4,
  kImageStream = 5,
  kInstanceStream = 6,
};

enum : std::uint64_t { kTrainSplit = 0, kEvalSplit = 1, kDownstreamSplit = 2 };

std::uint64_t name_key(const std::string& name) {
  return std::stoull(io::fnv1a_hex(name), nullptr, 16);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> make_transform(std::uint64_t seed, const std::string& name, std::size_t dim,
                                   double shift) {
  StreamRng rng{seed, kTransformStream, name_key(name)};
  std::vector<double> a(dim * dim);
  const double scale = shift / std::sqrt(static_cast<double>(dim));
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      a[r * dim + c] = (r == c ? 1.0 : 0.0) + scale * rng.normal();
    }
  }
  return a;
}

void check_transform(const std::vector<double>& a, std::size_t dim, const std::string& name) {
  if (a.size() != dim * dim) {
    fail(ErrorCode::InvalidSpec, name + ": domain_transform must be " + std::to_string(dim) +
                                     "x" + std::to_string(dim));
  }
  for (double x : a) {
    if (!std::isfinite(x)) fail(ErrorCode::InvalidSpec, name + ": non-finite domain_transform");
  }
  const Eigen::Map<const RowMatrix> m(a.data(), static_cast<Eigen::Index>(dim),
                                      static_cast<Eigen::Index>(dim));
  const Eigen::JacobiSVD<RowMatrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > kMaxTransformCondition) {
    fail(ErrorCode::InvalidSpec, name + ": domain_transform condition number exceeds " +
                                     std::to_string(kMaxTransformCondition));
  }
}

std::vector<double> normalized(std::vector<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) fail(ErrorCode::InvalidSpec, "generated a zero vector");
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> gaussian(StreamRng& rng, std::size_t dim, double sigma) {
  std::vector<double> v(dim);
  for (double& x : v) x = sigma * rng.normal();
  return v;
}

std::vector<float> apply_transform(const std::vector<double>& a, const std::vector<double>& x) {
  const std::size_t dim = x.size();
  std::vector<float> out(dim);
  for (std::size_t r = 0; r < dim; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dim; ++c) acc += a[r * dim + c] * x[c];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

// Cumulative weights of the power law (i+1)^-exponent over `count` classes.
std::vector<double> power_law_cdf(std::size_t count, double exponent) {
  std::vector<double> cdf(count);
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    acc += std::pow(static_cast<double>(i + 1), -exponent);
    cdf[i] = acc;
  }
  for (double& c : cdf) c /= acc;
  return cdf;
}

std::size_t sample_cdf(StreamRng& rng, const std::vector<double>& cdf) {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

struct LabelSource {
  std::string name;
  std::vector<std::size_t> concepts;
  std::vector<double> transform;
  double class_frequency = 0.0;
};

std::size_t grid_side(std::size_t max_boxes) {
  return static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(max_boxes))));
}

// Boxes sit in distinct cells of a jittered grid, so same-image boxes never
// overlap (IoU 0).
std::vector<SynthInstance> generate_image(const SynthSpec& spec, const EmbeddingMatrix& protos,
                                          const LabelSource& src, const std::vector<double>& cdf,
                                          std::uint64_t split, std::uint64_t image_id) {
  const std::uint64_t dkey = name_key(src.name);
  StreamRng image_rng{spec.seed, kImageStream, dkey, split, image_id};
  const std::size_t side = grid_side(spec.max_boxes);
  const std::size_t count =
      spec.min_boxes + image_rng.below(spec.max_boxes - spec.min_boxes + 1);
  std::vector<std::size_t> cells(side * side);
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(cells[i], cells[i + image_rng.below(cells.size() - i)]);
  }
  const double cell = spec.canvas / static_cast<double>(side);

  std::vector<SynthInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    StreamRng rng{spec.seed, kInstanceStream, dkey, split, image_id, i};
    const double cx = static_cast<double>(cells[i] % side) * cell;
    const double cy = static_cast<double>(cells[i] / side) * cell;
    const double w = cell * rng.uniform(0.5, 0.9);
    const double h = cell * rng.uniform(0.5, 0.9);
    const double x1 = cx + rng.uniform(0.0, cell - w);
    const double y1 = cy + rng.uniform(0.0, cell - h);

    SynthInstance inst;
    inst.image_id = image_id;
    inst.instance = static_cast<std::uint32_t>(i);
    inst.box = {x1, y1, x1 + w, y1 + h};
    std::vector<double> latent;
    if (rng.uniform() < spec.background_rate) {
      latent = gaussian(rng, spec.dim, 1.0 / std::sqrt(static_cast<double>(spec.dim)));
    } else {
      const std::size_t label = sample_cdf(rng, cdf);
      inst.local_label = label;
      const auto proto = protos.row(src.concepts[label]);
      latent = gaussian(rng, spec.dim, spec.noise_feat);
      for (std::size_t k = 0; k < spec.dim; ++k) latent[k] += proto[k];
    }
    inst.raw_feature = apply_transform(src.transform, latent);
    out.push_back(std::move(inst));
  }
  return out;
}

Shard generate_shard(const SynthSpec& spec, const EmbeddingMatrix& protos, const LabelSource& src,
                     std::uint64_t split, std::size_t images, const std::string& hash) {
  const auto cdf = power_law_cdf(src.concepts.size(), src.class_frequency);
  std::vector<std::vector<SynthInstance>> per_image(images);
  parallel_for(images, [&](std::size_t i) {
    per_image[i] = generate_image(spec, protos, src, cdf, split, i);
  });
  Shard shard;
  shard.dataset = src.name;
  shard.spec_hash = hash;
  shard.dim = spec.dim;
  for (auto& insts : per_image) {
    for (auto& inst : insts) shard.instances.push_back(std::move(inst));
  }
  return shard;
}

LabeledEmbeddings make_labelset(const SynthSpec& spec, const EmbeddingMatrix& protos,
                                const std::string& name,
                                const std::vector<std::size_t>& concepts) {
  LabelSet ls;
  ls.name = name;
  ls.dim = spec.dim;
  ls.normalized = true;
  EmbeddingMatrix emb(concepts.size(), spec.dim);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    const std::size_t p = concepts[i];
    ls.labels.push_back({"concept_" + std::to_string(p), "concept " + std::to_string(p), {}});
    StreamRng rng{spec.seed, kTextStream, name_key(name), p};
    auto t = gaussian(rng, spec.dim, spec.noise_text);
    const auto proto = protos.row(p);
    for (std::size_t k = 0; k < spec.dim; ++k) t[k] += proto[k];
    t = normalized(std::move(t));
    auto row = emb.row(i);
    for (std::size_t k = 0; k < spec.dim; ++k) row[k] = static_cast<float>(t[k]);
  }
  return {std::move(ls), std::move(emb)};
}

void check_concepts(const std::vector<std::size_t>& concepts, std::size_t n_prototypes,
                    const std::string& name) {
  if (concepts.empty()) fail(ErrorCode::InvalidSpec, name + ": concept list is empty");
  std::set<std::size_t> seen;
  for (std::size_t p : concepts) {
    if (p >= n_prototypes) {
      fail(ErrorCode::InvalidSpec, name + ": concept " + std::to_string(p) + " >= n_prototypes");
    }
    if (!seen.insert(p).second) {
      fail(ErrorCode::InvalidSpec, name + ": concept " + std::to_string(p) + " listed twice");
    }
  }
}

}  // namespace

nlohmann::json to_json(const SynthSpec& spec) {
  nlohmann::json datasets = nlohmann::json::array();
  for (const auto& d : spec.datasets) {
    nlohmann::json item = {{"name", d.name},
                           {"concepts", d.prototype_subset},
                           {"domain_shift", d.domain_shift},
                           {"images", d.images},
                           {"eval_images", d.eval_images},
                           {"class_frequency", d.class_frequency}};
    if (!d.domain_transform.empty()) item["domain_transform"] = d.domain_transform;
    datasets.push_back(std::move(item));
  }
  return {{"seed", spec.seed},
          {"n_prototypes", spec.n_prototypes},
          {"dim", spec.dim},
          {"latent_rank", spec.latent_rank},
          {"noise_text", spec.noise_text},
          {"noise_feat", spec.noise_feat},
          {"background_rate", spec.background_rate},
          {"canvas", spec.canvas},
          {"boxes_per_image", {spec.min_boxes, spec.max_boxes}},
          {"datasets", std::move(datasets)}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& doc) {
  StrictObject obj(doc, "synth");
  SynthSpec spec;
  spec.seed = obj.get("seed", spec.seed);
  spec.n_prototypes = obj.get("n_prototypes", spec.n_prototypes);
  spec.dim = obj.get("dim", spec.dim);
  spec.latent_rank = obj.get("latent_rank", spec.latent_rank);
  spec.noise_text = obj.get("noise_text", spec.noise_text);
  spec.noise_feat = obj.get("noise_feat", spec.noise_feat);
  spec.background_rate = obj.get("background_rate", spec.background_rate);
  spec.canvas = obj.get("canvas", spec.canvas);
  const auto boxes = obj.get<std::vector<std::size_t>>("boxes_per_image",
                                                       {spec.min_boxes, spec.max_boxes});
  if (boxes.size() != 2) fail(ErrorCode::BadConfig, "synth.boxes_per_image must be [min, max]");
  spec.min_boxes = boxes[0];
  spec.max_boxes = boxes[1];
  const auto& datasets = obj.child("datasets");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    StrictObject d(datasets[i], "synth.datasets[" + std::to_string(i) + "]");
    DatasetSpec ds;
    ds.name = d.require<std::string>("name");
    ds.prototype_subset = d.require<std::vector<std::size_t>>("concepts");
    ds.domain_transform = d.get<std::vector<double>>("domain_transform", {});
    ds.domain_shift = d.get("domain_shift", ds.domain_shift);
    ds.images = d.get("images", ds.images);
    ds.eval_images = d.get("eval_images", ds.eval_images);
    ds.class_frequency = d.get("class_frequency", ds.class_frequency);
    d.finish();
    spec.datasets.push_back(std::move(ds));
  }
  obj.finish();
  return spec;
}

nlohmann::json to_json(const DownstreamSpec& spec) {
  return {{"name", spec.name},
          {"concepts", spec.concepts},
          {"zero_shot", spec.zero_shot},
          {"domain_shift", spec.domain_shift},
          {"images", spec.images},
          {"class_frequency", spec.class_frequency}};
}

DownstreamSpec downstream_spec_from_json(const nlohmann::json& doc) {
  StrictObject obj(doc, "downstream");
  DownstreamSpec spec;
  spec.name = obj.require<std::string>("name");
  spec.concepts = obj.require<std::vector<std::size_t>>("concepts");
  spec.zero_shot = obj.get("zero_shot", spec.zero_shot);
  spec.domain_shift = obj.get("domain_shift", spec.domain_shift);
  spec.images = obj.get("images", spec.images);
  spec.class_frequency = obj.get("class_frequency", spec.class_frequency);
  obj.finish();
  return spec;
}

SynthSpec resolve(const SynthSpec& spec) {
  SynthSpec out = spec;
  if (out.dim < 1) fail(ErrorCode::InvalidSpec, "dim must be >= 1");
  if (out.n_prototypes < 1) fail(ErrorCode::InvalidSpec, "n_prototypes must be >= 1");
  if (out.latent_rank > out.dim) fail(ErrorCode::InvalidSpec, "latent_rank exceeds dim");
  if (!(out.noise_text >= 0.0) || !(out.noise_feat >= 0.0)) {
    fail(ErrorCode::InvalidSpec, "noise levels must be non-negative");
  }
  if (!(out.background_rate >= 0.0 && out.background_rate < 1.0)) {
    fail(ErrorCode::InvalidSpec, "background_rate must lie in [0, 1)");
  }
  if (!(out.canvas > 0.0)) fail(ErrorCode::InvalidSpec, "canvas must be positive");
  if (out.min_boxes < 1 || out.max_boxes < out.min_boxes) {
    fail(ErrorCode::InvalidSpec, "boxes_per_image must satisfy 1 <= min <= max");
  }
  if (out.datasets.empty()) fail(ErrorCode::InvalidSpec, "no datasets");
  std::set<std::string> names;
  for (auto& d : out.datasets) {
    if (d.name.empty() || !names.insert(d.name).second) {
      fail(ErrorCode::InvalidSpec, "dataset names must be non-empty and unique");
    }
    check_concepts(d.prototype_subset, out.n_prototypes, d.name);
    if (!(d.class_frequency >= 0.0)) {
      fail(ErrorCode::InvalidSpec, d.name + ": class_frequency must be >= 0");
    }
    if (d.domain_transform.empty()) {
      d.domain_transform = make_transform(out.seed, d.name, out.dim, d.domain_shift);
    }
    check_transform(d.domain_transform, out.dim, d.name);
  }
  return out;
}

std::string spec_hash(const SynthSpec& spec) { return io::fnv1a_hex(to_json(spec).dump()); }

EmbeddingMatrix generate_prototypes(const SynthSpec& spec) {
  const std::size_t dim = spec.dim;
  const bool low_rank = spec.latent_rank > 0 && spec.latent_rank < dim;
  std::vector<double> basis;
  if (low_rank) {
    StreamRng rng{spec.seed, kBasisStream};
    basis = gaussian(rng, dim * spec.latent_rank, 1.0);
  }
  EmbeddingMatrix protos(spec.n_prototypes, dim);
  for (std::size_t p = 0; p < spec.n_prototypes; ++p) {
    StreamRng rng{spec.seed, kPrototypeStream, p};
    std::vector<double> v;
    if (low_rank) {
      const auto z = gaussian(rng, spec.latent_rank, 1.0);
      v.assign(dim, 0.0);
      for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t r = 0; r < spec.latent_rank; ++r) {
          v[k] += basis[k * spec.latent_rank + r] * z[r];
        }
      }
    } else {
      v = gaussian(rng, dim, 1.0);
    }
    v = normalized(std::move(v));
    auto row = protos.row(p);
    for (std::size_t k = 0; k < dim; ++k) row[k] = static_cast<float>(v[k]);
  }
  return protos;
}

SynthCorpus generate(const SynthSpec& input) {
  SynthCorpus corpus;
  corpus.spec = resolve(input);
  const auto& spec = corpus.spec;
  const std::string hash = spec_hash(spec);
  corpus.prototypes = generate_prototypes(spec);
  for (const auto& d : spec.datasets) {
    corpus.labelsets.push_back(make_labelset(spec, corpus.prototypes, d.name, d.prototype_subset));
    corpus.oracle[d.name] = d.prototype_subset;
    const LabelSource src{d.name, d.prototype_subset, d.domain_transform, d.class_frequency};
    corpus.train_shards.push_back(
        generate_shard(spec, corpus.prototypes, src, kTrainSplit, d.images, hash));
    corpus.eval_shards.push_back(
        generate_shard(spec, corpus.prototypes, src, kEvalSplit, d.eval_images, hash));
  }
  return corpus;
}

DownstreamSet split_unseen(const SynthSpec& input, const DownstreamSpec& downstream) {
  const SynthSpec spec = resolve(input);
  check_concepts(downstream.concepts, spec.n_prototypes, downstream.name);
  for (const auto& d : spec.datasets) {
    if (d.name == downstream.name) {
      fail(ErrorCode::InvalidSpec, "downstream set '" + downstream.name +
                                       "' reuses a training dataset name");
    }
  }
  if (downstream.zero_shot) {
    for (const auto& d : spec.datasets) {
      for (std::size_t p : downstream.concepts) {
        if (std::find(d.prototype_subset.begin(), d.prototype_subset.end(), p) !=
            d.prototype_subset.end()) {
          fail(ErrorCode::HoldoutLeak, "holdout concept " + std::to_string(p) +
                                           " is labeled by training dataset '" + d.name + "'");
        }
      }
    }
  }
  const auto protos = generate_prototypes(spec);
  auto transform = make_transform(spec.seed, downstream.name, spec.dim, downstream.domain_shift);
  check_transform(transform, spec.dim, downstream.name);
  DownstreamSet out;
  out.labels = make_labelset(spec, protos, downstream.name, downstream.concepts);
  out.concepts = downstream.concepts;
  const LabelSource src{downstream.name, downstream.concepts, std::move(transform),
                        downstream.class_frequency};
  out.shard = generate_shard(spec, protos, src, kDownstreamSplit, downstream.images,
                             io::fnv1a_hex(spec_hash(spec) + to_json(downstream).dump()));
  return out;
}

void write_shard(const Shard& shard, const std::filesystem::path& path) {
  std::ostringstream out;
  out << nlohmann::json{{"type", "header"},
                        {"spec_hash", shard.spec_hash},
                        {"dataset", shard.dataset},
                        {"dim", shard.dim},
                        {"count", shard.instances.size()}}
             .dump()
      << '\n';
  for (const auto& inst : shard.instances) {
    nlohmann::json rec = {
        {"image_id", inst.image_id},
        {"instance", inst.instance},
        {"box", {inst.box.x1, inst.box.y1, inst.box.x2, inst.box.y2}},
        {"label", inst.local_label ? nlohmann::json(*inst.local_label) : nlohmann::json(nullptr)},
        {"feature", io::base64_encode(io::floats_to_le_bytes(inst.raw_feature))}};
    out << rec.dump() << '\n';
  }
  io::write_text(path, out.str());
}

Shard read_shard(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::string line;
  Shard shard;
  std::size_t count = 0;
  try {
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, path.string() + ": empty shard");
    const auto header = nlohmann::json::parse(line);
    if (header.at("type").get<std::string>() != "header") {
      fail(ErrorCode::ParseError, path.string() + ": first line is not a shard header");
    }
    shard.spec_hash = header.at("spec_hash").get<std::string>();
    shard.dataset = header.at("dataset").get<std::string>();
    shard.dim = header.at("dim").get<std::size_t>();
    count = header.at("count").get<std::size_t>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      SynthInstance inst;
      inst.image_id = rec.at("image_id").get<std::uint64_t>();
      inst.instance = rec.at("instance").get<std::uint32_t>();
      const auto box = rec.at("box").get<std::vector<double>>();
      if (box.size() != 4) fail(ErrorCode::ParseError, path.string() + ": box needs 4 values");
      inst.box = {box[0], box[1], box[2], box[3]};
      if (!rec.at("label").is_null()) inst.local_label = rec.at("label").get<std::size_t>();
      inst.raw_feature =
          io::le_bytes_to_floats(io::base64_decode(rec.at("feature").get<std::string>()));
      if (inst.raw_feature.size() != shard.dim) {
        fail(ErrorCode::DimMismatch, path.string() + ": feature length disagrees with header");
      }
      shard.instances.push_back(std::move(inst));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (shard.instances.size() != count) {
    fail(ErrorCode::ParseError, path.string() + ": header count " + std::to_string(count) +
                                    " but " + std::to_string(shard.instances.size()) + " records");
  }
  return shard;
}

}  // namespace lsalign
