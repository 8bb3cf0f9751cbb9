#include <cmath>
#include <cstdlib>
#include <map>

#include <Eigen/Dense>

#include "doctest.h"
#include "helpers.hpp"
#include "lsalign/eval.hpp"
#include "lsalign/io.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/similarity.hpp"
#include "lsalign/synth_data.hpp"

using namespace lsalign;
using testutil::error_code_of;

namespace {

std::vector<double> identity(std::size_t dim) {
  std::vector<double> a(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) a[i * dim + i] = 1.0;
  return a;
}

SynthSpec small_spec() {
  SynthSpec s;
  s.seed = 5;
  s.n_prototypes = 10;
  s.dim = 8;
  s.noise_text = 0.05;
  s.noise_feat = 0.1;
  s.background_rate = 0.2;
  s.max_boxes = 4;
  s.datasets = {{"a", {0, 1, 2, 3}, {}, 0.2, 30, 10, 0.5},
                {"b", {3, 4, 5, 6}, {}, 0.2, 30, 10, 0.5}};
  return s;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const auto spec = small_spec();
  const auto x = generate(spec);
  const auto y = generate(spec);
  REQUIRE(x.train_shards.size() == 2);
  CHECK(x.train_shards == y.train_shards);
  CHECK(x.eval_shards == y.eval_shards);
  CHECK(x.labelsets == y.labelsets);

  testutil::TempDir dir("syn");
  write_shard(x.train_shards[0], dir / "a.ndjson");
  write_shard(y.train_shards[0], dir / "b.ndjson");
  CHECK(io::read_bytes(dir / "a.ndjson") == io::read_bytes(dir / "b.ndjson"));
  CHECK(read_shard(dir / "a.ndjson") == x.train_shards[0]);

  auto other = spec;
  other.seed = 6;
  CHECK_FALSE(generate(other).train_shards == x.train_shards);
}

TEST_CASE("generation does not depend on the thread count") {
  const auto spec = small_spec();
  const char* old = std::getenv("LABELSPACE_ALIGN_THREADS");
  const std::string keep = old ? old : "";
  setenv("LABELSPACE_ALIGN_THREADS", "1", 1);
  const auto serial = generate(spec);
  setenv("LABELSPACE_ALIGN_THREADS", "4", 1);
  const auto threaded = generate(spec);
  if (old) {
    setenv("LABELSPACE_ALIGN_THREADS", keep.c_str(), 1);
  } else {
    unsetenv("LABELSPACE_ALIGN_THREADS");
  }
  CHECK(serial.train_shards == threaded.train_shards);
  CHECK(serial.labelsets == threaded.labelsets);
}

TEST_CASE("corpus structure") {
  const auto corpus = generate(small_spec());
  CHECK(corpus.oracle.at("a") == std::vector<std::size_t>{0, 1, 2, 3});
  const auto& [labels, emb] = corpus.labelsets[1];
  CHECK(labels.labels[0].id == "concept_3");
  CHECK_NOTHROW(validate_labelset(labels, emb));
  for (const auto& shard : corpus.train_shards) {
    CHECK(shard.dim == 8);
    std::map<std::uint64_t, std::vector<Box>> boxes;
    for (const auto& inst : shard.instances) {
      CHECK(inst.raw_feature.size() == 8);
      CHECK(inst.box.x1 >= 0.0);
      CHECK(inst.box.x2 <= 1000.0);
      if (inst.local_label) CHECK(*inst.local_label < 4);
      for (const auto& other : boxes[inst.image_id]) CHECK(iou(inst.box, other) == 0.0);
      boxes[inst.image_id].push_back(inst.box);
    }
    CHECK(boxes.size() == 30);
  }
}

TEST_CASE("shared concepts without text noise are identical labels") {
  auto spec = small_spec();
  spec.noise_text = 0.0;
  const auto corpus = generate(spec);
  const auto space = concat_label_spaces(corpus.labelsets);
  // concept 3 is label 3 of a (global 3) and label 0 of b (global 4)
  for (std::size_t k = 0; k < spec.dim; ++k) {
    CHECK(space.embeddings(3, k) == space.embeddings(4, k));
  }
  const auto sim = build_similarity_matrix(space.embeddings);
  CHECK(sim(3, 4) == 1.0f);
  CHECK(sim(4, 3) == 1.0f);
}

TEST_CASE("noise-free corpus is solvable by a linear projector") {
  auto spec = small_spec();
  spec.noise_feat = 0.0;
  spec.background_rate = 0.0;
  for (auto& d : spec.datasets) d.domain_transform = identity(spec.dim);
  const auto corpus = generate(spec);
  const auto space = concat_label_spaces(corpus.labelsets);

  // Least squares W minimizing |W X - T| over all foreground regions, with T
  // the positive label's embedding.
  std::vector<const SynthInstance*> fg;
  std::vector<std::size_t> global;
  for (const auto& shard : corpus.train_shards) {
    const auto offset = space.source(shard.dataset).offset;
    for (const auto& inst : shard.instances) {
      fg.push_back(&inst);
      global.push_back(offset + *inst.local_label);
    }
  }
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Eigen::MatrixXd X(d, static_cast<Eigen::Index>(fg.size()));
  Eigen::MatrixXd T(d, X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      X(k, i) = fg[i]->raw_feature[k];
      T(k, i) = space.embeddings(global[i], k);
    }
  }
  const Eigen::MatrixXd W =
      X.transpose().completeOrthogonalDecomposition().solve(T.transpose()).transpose();

  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    const Eigen::VectorXd v = W * X.col(i);
    // Shared concept 3 appears twice with near-identical embeddings; a region
    // counts as solved when it lands on any label of its concept.
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t j = 0; j < space.size(); ++j) {
      double dot = 0.0, nt = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        dot += v[k] * space.embeddings(j, k);
        nt += space.embeddings(j, k) * space.embeddings(j, k);
      }
      const double c = dot / (v.norm() * std::sqrt(nt));
      if (c > best_cos) {
        best_cos = c;
        best = j;
      }
    }
    const auto& truth = space.entries[global[i]];
    const auto& got = space.entries[best];
    const auto concept_of = [&](const UnifiedLabel& e) {
      return corpus.oracle.at(e.dataset)[e.local_index];
    };
    if (concept_of(truth) == concept_of(got)) ++correct;
  }
  CHECK(correct == fg.size());
}

TEST_CASE("label frequencies follow the power law") {
  SynthSpec spec;
  spec.seed = 3;
  spec.n_prototypes = 6;
  spec.dim = 4;
  spec.max_boxes = 4;
  spec.datasets = {{"a", {0, 1, 2, 3, 4, 5}, {}, 0.0, 3000, 0, 1.0}};
  const auto corpus = generate(spec);
  std::vector<double> counts(6, 0.0);
  double total = 0.0;
  for (const auto& inst : corpus.train_shards[0].instances) {
    counts[*inst.local_label] += 1;
    total += 1;
  }
  double norm = 0.0;
  for (int k = 1; k <= 6; ++k) norm += 1.0 / k;
  double chi2 = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double expected = total * (1.0 / (k + 1)) / norm;
    chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  }
  // 5 degrees of freedom, p = 0.001
  CHECK(chi2 < 20.515);
  CHECK(counts[0] > counts[5]);
}

TEST_CASE("spec validation") {
  auto spec = small_spec();
  SUBCASE("unknown concept") {
    spec.datasets[0].prototype_subset.push_back(99);
    CHECK(error_code_of([&] { resolve(spec); }) == ErrorCode::InvalidSpec);
  }
  SUBCASE("ill-conditioned transform") {
    auto a = identity(spec.dim);
    a[0] = 100.0;
    spec.datasets[0].domain_transform = a;
    CHECK(error_code_of([&] { resolve(spec); }) == ErrorCode::InvalidSpec);
  }
  SUBCASE("wrong transform size") {
    spec.datasets[0].domain_transform = {1.0, 0.0};
    CHECK(error_code_of([&] { resolve(spec); }) == ErrorCode::InvalidSpec);
  }
  SUBCASE("duplicate dataset names") {
    spec.datasets[1].name = "a";
    CHECK(error_code_of([&] { resolve(spec); }) == ErrorCode::InvalidSpec);
  }
  SUBCASE("generated transforms are filled in and kept") {
    const auto r = resolve(spec);
    CHECK(r.datasets[0].domain_transform.size() == spec.dim * spec.dim);
    CHECK(resolve(r).datasets[0].domain_transform == r.datasets[0].domain_transform);
    CHECK(spec_hash(r) == spec_hash(resolve(spec)));
  }
}

TEST_CASE("synth spec json round trip") {
  const auto spec = resolve(small_spec());
  const auto back = synth_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  CHECK(spec_hash(back) == spec_hash(spec));
}

TEST_CASE("downstream sets") {
  const auto spec = small_spec();
  SUBCASE("unseen concepts") {
    const auto set = split_unseen(spec, {"zs", {8, 9}, true, 0.2, 20, 0.0});
    CHECK(set.concepts == std::vector<std::size_t>{8, 9});
    CHECK(set.labels.first.size() == 2);
    CHECK_FALSE(set.shard.instances.empty());
  }
  SUBCASE("holdout leak") {
    CHECK(error_code_of([&] { split_unseen(spec, {"zs", {1, 9}, true, 0.2, 20, 0.0}); }) ==
          ErrorCode::HoldoutLeak);
  }
  SUBCASE("seen concepts in a new domain") {
    const auto set = split_unseen(spec, {"tr", {1, 4}, false, 0.2, 20, 0.0});
    // Labels are indexed against the downstream label set; the oracle maps
    // them back to concepts.
    for (const auto& inst : set.shard.instances) {
      if (inst.local_label) CHECK(*inst.local_label < 2);
    }
    CHECK(set.concepts == std::vector<std::size_t>{1, 4});
  }
}
