// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "helpers.hpp"
#include "lsalign/alignment.hpp"
#include "lsalign/eval.hpp"
#include "lsalign/inference.hpp"
#include "lsalign/io.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/pipeline.hpp"
#include "lsalign/similarity.hpp"
#include "lsalign/trainer.hpp"
#include "oracles.hpp"

using namespace lsalign;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  std::printf("%s  %-28s %s (%.2f s)\n", out.pass ? "PASS" : "FAIL", name.c_str(),
              out.detail.c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << x;
  return s.str();
}

// --------------------------------------------------------------------------

Outcome similarity_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  StreamRng rng(20240601);
  std::size_t violations = 0;
  double worst_scale = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const std::size_t n = 1 + rng.below(128);
    const std::size_t dim = 1 + rng.below(64);
    auto emb = testutil::random_embeddings(rng, n, dim, false);
    // Some sets carry duplicated rows so that cos = 1 and degenerate rows occur.
    if (set % 10 == 0 && n > 1) {
      auto data = emb.data();
      const auto src = rng.below(n), dst = rng.below(n);
      std::copy_n(data.begin() + src * dim, dim, data.begin() + dst * dim);
      emb = EmbeddingMatrix(n, dim, data);
    }
    const auto sim = build_similarity_matrix(emb);

    std::vector<double> cos(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) cos[i * n + j] = cosine(emb.row(i), emb.row(j));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool degenerate = std::find(sim.epsilon_rows.begin(), sim.epsilon_rows.end(), i) !=
                              sim.epsilon_rows.end();
      if (sim(i, i) != 1.0f) ++violations;
      float lo = 2.0f;
      for (std::size_t j = 0; j < n; ++j) {
        const float s = sim(i, j);
        if (!(s >= 0.0f && s <= 1.0f)) ++violations;
        lo = std::min(lo, s);
      }
      // Walking the row in increasing cosine order, S never decreases.
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return cos[i * n + a] < cos[i * n + b]; });
      for (std::size_t k = 1; k < n; ++k) {
        if (sim(i, order[k]) < sim(i, order[k - 1])) ++violations;
      }
      if (!degenerate && lo != 0.0f) ++violations;
      if (degenerate) {
        for (std::size_t j = 0; j < n; ++j) {
          if (sim(i, j) != 1.0f) ++violations;
        }
      }
    }

    // Rescale each row by a positive factor.
    auto data = emb.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::exp(rng.uniform(-3.0, 3.0));
      for (std::size_t j = 0; j < dim; ++j) {
        data[i * dim + j] = static_cast<float>(data[i * dim + j] * c);
      }
    }
    const auto scaled = build_similarity_matrix(EmbeddingMatrix(n, dim, data));
    for (std::size_t k = 0; k < n * n; ++k) {
      worst_scale = std::max(worst_scale, static_cast<double>(std::abs(scaled.data[k] - sim.data[k])));
    }
  }

  // Fixture where rows have different minima.
  const double deg = std::acos(-1.0) / 180.0;
  EmbeddingMatrix fixture(3, 2,
                          {1.0f, 0.0f, static_cast<float>(std::cos(60 * deg)),
                           static_cast<float>(std::sin(60 * deg)),
                           static_cast<float>(std::cos(150 * deg)),
                           static_cast<float>(std::sin(150 * deg))});
  const auto fs_ = build_similarity_matrix(fixture);
  const bool asymmetric = fs_(0, 1) != fs_(1, 0);

  const double secs = seconds_since(t0);
  const bool pass = violations == 0 && worst_scale <= 1e-6 && asymmetric && secs < 10.0;
  return {pass, "1000 sets, violations=" + std::to_string(violations) +
                    " scale_diff=" + fmt(worst_scale, 9) +
                    " asymmetric=" + (asymmetric ? "yes" : "no")};
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(std::max(na, nb)), 1e-12);
}

std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  StreamRng rng(777);
  double worst_c = 0.0, worst_v = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    LossConfig cfg;
    cfg.lambda = inst % 2 ? 10.0 : 0.0;
    cfg.tau = (inst / 2) % 2 ? 1.0 : 0.07;
    const std::size_t n = 2 + rng.below(30);
    const std::size_t dim = 2 + rng.below(30);
    const auto emb = testutil::random_embeddings(rng, n, dim);
    const auto sim = build_similarity_matrix(emb);
    const auto v = testutil::random_vector(rng, dim);
    const std::size_t pos = rng.below(n);
    const HardTarget target{pos};
    const auto row = sim.row(pos);

    const auto loss = language_loss(v, emb, target, row, cfg);
    const auto scores = score(v, emb);
    const auto by_c = [&](const std::vector<double>& c) {
      AlignmentScores s = scores;
      s.c = c;
      return hard_loss(s, target, cfg).value + cfg.lambda * soft_loss(s, row).value;
    };
    worst_c = std::max(worst_c, rel_err(loss.grad_c, central_diff(by_c, scores.c)));
    const auto by_v = [&](const std::vector<double>& x) {
      return language_loss(x, emb, target, row, cfg).total;
    };
    worst_v = std::max(worst_v, rel_err(loss.grad_v, central_diff(by_v, v)));
  }
  const double secs = seconds_since(t0);
  return {worst_c < 1e-4 && worst_v < 1e-4 && secs < 10.0,
          "100 instances, max rel err grad_c=" + fmt(worst_c * 1e6, 3) + "e-6 grad_v=" +
              fmt(worst_v * 1e6, 3) + "e-6"};
}

Outcome loss_algebra() {
  StreamRng rng(4242);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 2 + rng.below(20), dim = 2 + rng.below(20);
    const auto emb = testutil::random_embeddings(rng, n, dim);
    const auto sim = build_similarity_matrix(emb);
    const auto v = testutil::random_vector(rng, dim);
    LossConfig cfg;
    cfg.lambda = rng.uniform(0.0, 20.0);
    const std::size_t pos = rng.below(n);
    const auto l = language_loss(v, emb, {pos}, sim.row(pos), cfg);
    worst = std::max(worst, std::abs(l.total - (l.hard + cfg.lambda * l.soft)));
  }

  SynthSpec spec;
  spec.seed = 11;
  spec.n_prototypes = 10;
  spec.dim = 12;
  spec.noise_text = 0.05;
  spec.noise_feat = 0.1;
  spec.background_rate = 0.2;
  spec.max_boxes = 4;
  spec.datasets = {{"a", {0, 1, 2, 3, 4}, {}, 0.2, 40, 0, 0.5},
                   {"b", {4, 5, 6, 7, 8}, {}, 0.2, 40, 0, 0.5}};
  const auto corpus = generate(spec);
  const auto space = concat_label_spaces(corpus.labelsets);
  const auto sim = build_similarity_matrix(space.embeddings);
  LossConfig zero;
  zero.lambda = 0.0;
  TrainConfig tc;
  tc.steps = 500;
  tc.batch_size = 16;
  tc.seed = 5;
  const auto init = init_model(space.dim, spec.dim, zero, 5, space.checksum());
  const auto full = train(init, space, sim, corpus.train_shards, tc);
  tc.hard_only = true;
  const auto hl = train(init, space, sim, corpus.train_shards, tc);
  bool identical = full.report.trace.size() == 500 && hl.report.trace.size() == 500;
  for (std::size_t i = 0; identical && i < 500; ++i) {
    identical = full.report.trace[i].total == hl.report.trace[i].total &&
                full.report.trace[i].hard == hl.report.trace[i].hard;
  }
  identical = identical && full.model.weight == hl.model.weight;
  return {worst < 1e-9 && identical, "max |total-(hard+l*soft)|=" + fmt(worst * 1e12, 3) +
                                         "e-12, 500-step traces " +
                                         (identical ? "bitwise equal" : "differ")};
}

Outcome counting() {
  auto make = [](std::initializer_list<std::pair<const char*, std::size_t>> sizes) {
    std::vector<LabeledEmbeddings> sets;
    std::uint64_t seed = 1;
    for (const auto& [name, n] : sizes) sets.push_back(testutil::random_labelset(name, n, 8, seed++));
    return concat_label_spaces(sets).size();
  };
  const auto two = make({{"lvis", 1203}, {"coco", 80}});
  const auto four = make({{"lvis", 1203}, {"coco", 80}, {"objects365", 365}, {"openimages", 601}});
  return {two == 1283 && four == 2249,
          "1203+80=" + std::to_string(two) + ", 1203+80+365+601=" + std::to_string(four)};
}

Outcome scaling_trend(const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_scaling_experiment(cfg);
  const std::size_t n_sets = report.rows.size();
  const std::size_t n_seeds = cfg.experiment.seeds.size();
  std::ostringstream detail;
  bool upstream_ok = true;
  const auto& top = report.rows.back();
  detail << "upstream K=" << n_sets << " vs baseline:";
  for (const auto& [name, runs] : report.baselines) {
    double base = 0.0, multi = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      base += runs[s].upstream.at(name).accuracy;
      multi += top.runs[s].upstream.at(name).accuracy;
    }
    base /= static_cast<double>(n_seeds);
    multi /= static_cast<double>(n_seeds);
    upstream_ok = upstream_ok && multi >= base - 0.01;
    detail << " " << name << " " << fmt(multi, 3) << "/" << fmt(base, 3);
  }
  std::size_t monotone = 0;
  detail << "; transfer by K:";
  for (std::size_t s = 0; s < n_seeds; ++s) {
    bool ok = true;
    detail << " [";
    for (std::size_t k = 0; k < n_sets; ++k) {
      const double acc = report.rows[k].runs[s].downstream.at(cfg.experiment.transfer_set).accuracy;
      detail << (k ? " " : "") << fmt(acc, 3);
      if (k > 0) {
        const double prev =
            report.rows[k - 1].runs[s].downstream.at(cfg.experiment.transfer_set).accuracy;
        ok = ok && acc >= prev;
      }
    }
    detail << "]";
    if (ok) ++monotone;
  }
  detail << " monotone seeds " << monotone << "/" << n_seeds;
  const double secs = seconds_since(t0);
  const bool pass = n_seeds >= 5 && upstream_ok && monotone >= n_seeds - 1 && secs < 600.0;
  return {pass, detail.str()};
}

Outcome ablation_trend(const PipelineConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_ablation(cfg);
  const double secs = seconds_since(t0);
  const bool pass = r.seeds.size() >= 5 && r.full.mean >= r.hard_only.mean &&
                    2 * r.seeds_full_not_worse > r.seeds.size() && secs < 600.0;
  return {pass, "zero-shot acc hl+sl " + fmt(r.full.mean, 3) + " vs hl " +
                    fmt(r.hard_only.mean, 3) + ", effect size " + fmt(r.effect_size, 2) +
                    ", not worse on " + std::to_string(r.seeds_full_not_worse) + "/" +
                    std::to_string(r.seeds.size()) + " seeds"};
}

Outcome restriction_coherence() {
  std::vector<LabeledEmbeddings> sets{testutil::random_labelset("a", 40, 32, 1),
                                      testutil::random_labelset("b", 25, 32, 2),
                                      testutil::random_labelset("c", 30, 32, 3)};
  const auto space = concat_label_spaces(sets);
  const auto full = full_view(space);
  std::vector<SubspaceView> views;
  for (const auto& src : space.sources) views.push_back(subspace(space, src.dataset));
  StreamRng rng(99);
  std::vector<std::size_t> pick;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (rng.uniform() < 0.3) pick.push_back(i);
  }
  views.push_back(select_labels(space, pick, "random"));

  const ToyModel model = init_model(32, 48, {}, 7, space.checksum());
  double worst = 0.0;
  for (int p = 0; p < 1000; ++p) {
    std::vector<float> raw(48);
    for (auto& x : raw) x = static_cast<float>(rng.normal());
    const auto pf = predict(model, raw, full, 0.07);
    for (const auto& view : views) {
      const auto pv = predict(model, raw, view, 0.07);
      for (std::size_t k = 0; k < view.size(); ++k) {
        worst = std::max(worst, std::abs(pv.scores[k] - pf.scores[view.selected[k]]));
        worst = std::max(worst, std::abs(pv.cosines[k] - pf.cosines[view.selected[k]]));
      }
    }
  }
  return {worst <= 1e-7, "1000 proposals x 4 views, max diff " + fmt(worst, 12)};
}

Outcome evaluator_oracle() {
  StreamRng rng(31337);
  double worst = 0.0;
  int mismatched_presence = 0;
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<GroundTruth> gts;
    std::vector<ScoredBox> dets;
    const auto n_gt = rng.below(6);
    const auto n_det = rng.below(11);
    auto random_box = [&] {
      const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
      return Box{x, y, x + rng.uniform(2, 12), y + rng.uniform(2, 12)};
    };
    for (std::uint64_t i = 0; i < n_gt; ++i) gts.push_back({rng.below(3), random_box()});
    for (std::uint64_t i = 0; i < n_det; ++i) {
      dets.push_back({rng.below(3), random_box(), static_cast<double>(rng.below(6)) / 5});
    }
    for (double t : coco_iou_thresholds()) {
      const auto got = average_precision(dets, gts, t);
      const auto want = oracle::average_precision(dets, gts, t);
      if (got.has_value() != want.has_value()) {
        ++mismatched_presence;
      } else if (got) {
        worst = std::max(worst, std::abs(*got - *want));
      }
    }
  }

  // Perfect detections on a generated shard.
  SynthSpec spec;
  spec.seed = 8;
  spec.n_prototypes = 6;
  spec.dim = 4;
  spec.background_rate = 0.2;
  spec.datasets = {{"p", {0, 1, 2, 3, 4, 5}, {}, 0.1, 50, 0, 0.5}};
  const auto corpus = generate(spec);
  const auto& [labels, emb] = corpus.labelsets[0];
  const auto view = external_subspace(labels, emb, 4);
  std::vector<Detection> perfect;
  for (const auto& i : corpus.train_shards[0].instances) {
    if (i.local_label) {
      perfect.push_back({i.image_id, i.box, *i.local_label, view.label_ids[*i.local_label], 1.0});
    }
  }
  Shard shard = corpus.train_shards[0];
  shard.dataset = view.name;
  const auto report = evaluate(perfect, shard, view);

  return {worst < 1e-9 && mismatched_presence == 0 && report.map == 1.0,
          "200 instances x 10 thresholds, max diff " + fmt(worst, 12) +
              "; perfect detections mAP=" + fmt(report.map, 4)};
}

Outcome repeat_factor_oracle() {
  StreamRng rng(5150);
  int mismatches = 0;
  for (int corpus = 0; corpus < 100; ++corpus) {
    std::vector<std::vector<std::size_t>> images(1 + rng.below(500));
    const auto n_classes = 1 + rng.below(60);
    for (auto& img : images) {
      const auto k = rng.below(6);
      for (std::uint64_t i = 0; i < k; ++i) img.push_back(rng.below(n_classes));
    }
    const double t = corpus % 2 ? 0.001 : rng.uniform(0.001, 0.5);
    if (repeat_factors(images, t) != oracle::repeat_factors(images, t)) ++mismatches;
  }
  std::vector<std::vector<std::size_t>> fixture(10000, std::vector<std::size_t>{0});
  fixture[123].push_back(1);
  const double r = repeat_factors(fixture, 0.001)[123];
  const bool value_ok = fmt(r, 4) == "3.1623";
  return {mismatches == 0 && value_ok, "100 corpora, mismatches=" + std::to_string(mismatches) +
                                           "; rare-class fixture r=" + fmt(r, 4)};
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<fs::path> artifacts(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

nlohmann::json without_timing(nlohmann::json doc) {
  if (doc.is_object()) {
    doc.erase("wall_seconds");
    for (auto& [key, value] : doc.items()) value = without_timing(value);
  }
  return doc;
}

// Runs synth/train/infer/eval twice into the same work directory. Binary and
// NDJSON artifacts must match byte for byte, JSON documents semantically
// (wall-clock timings excluded). Also times one pipeline pass.
Outcome cli_reproducibility(double& pipeline_seconds) {
  testutil::TempDir dir("accept");
  const std::string cli = LSALIGN_CLI_PATH;
  const std::string config = LSALIGN_CONFIG_DIR "/fixture3.json";
  const std::string common = " --config " + config + " --workdir " + (dir / "w").string();
  for (int pass = 0; pass < 2; ++pass) {
    const auto t0 = std::chrono::steady_clock::now();
    for (const char* cmd : {"synth", "train", "infer", "eval"}) {
      const int code = shell(cli + " " + cmd + common);
      if (code != 0) return {false, std::string(cmd) + " exited with " + std::to_string(code)};
    }
    if (pass == 0) {
      pipeline_seconds = seconds_since(t0);
      fs::copy(dir / "w", dir / "first", fs::copy_options::recursive);
    }
  }
  const auto a = artifacts(dir / "first");
  if (a != artifacts(dir / "w")) return {false, "artifact sets differ"};
  std::size_t binaries = 0, differing = 0;
  for (const auto& rel : a) {
    const auto x = dir / "first" / rel;
    const auto y = dir / "w" / rel;
    if (rel.extension() == ".json") {
      if (without_timing(io::read_json(x)) != without_timing(io::read_json(y))) ++differing;
      continue;
    }
    if (rel.extension() == ".bin") ++binaries;
    if (io::read_bytes(x) != io::read_bytes(y)) ++differing;
  }
  return {differing == 0 && binaries > 0,
          std::to_string(a.size()) + " artifacts (" + std::to_string(binaries) +
              " binary) compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  const auto cfg = load_pipeline_config(LSALIGN_CONFIG_DIR "/benchmark.json");

  run("similarity-matrix suite", similarity_suite);
  run("gradient suite", gradient_suite);
  run("loss algebra", loss_algebra);
  run("label-space counting", counting);
  run("scaling trend", [&] { return scaling_trend(cfg); });
  run("ablation trend", [&] { return ablation_trend(cfg); });
  run("restriction coherence", restriction_coherence);
  run("evaluator oracle", evaluator_oracle);
  run("repeat-factor oracle", repeat_factor_oracle);
  double pipeline_seconds = 0.0;
  run("cli reproducibility", [&] { return cli_reproducibility(pipeline_seconds); });
  run("pipeline runtime", [&] {
    return Outcome{pipeline_seconds > 0.0 && pipeline_seconds < 60.0,
                   "3-dataset fixture synth+train+infer+eval in " + fmt(pipeline_seconds, 2) + " s"};
  });

  std::printf("%s: %d failing\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
