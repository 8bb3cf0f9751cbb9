#include "lsalign/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lsalign/error.hpp"
#include "lsalign/inference.hpp"
#include "lsalign/io.hpp"
#include "lsalign/json_util.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/parallel.hpp"
#include "lsalign/similarity.hpp"

namespace lsalign {
namespace {

std::string run_name(const RunOutcome& run) {
  std::string name = run.hard_only ? "hl" : "full";
  for (const auto& d : run.datasets) name += "_" + d;
  return name + "_seed" + std::to_string(run.seed);
}

void persist(const std::optional<std::filesystem::path>& dir, const RunOutcome& run) {
  if (!dir) return;
  io::ensure_directory(*dir);
  io::write_json(*dir / (run_name(run) + ".json"), to_json(run));
}

nlohmann::json to_json(const Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

PipelineConfig with_seed(const PipelineConfig& cfg, std::uint64_t seed) {
  PipelineConfig out = cfg;
  out.synth.seed = seed;
  out.train.seed = seed;
  return out;
}

std::vector<DownstreamSet> make_downstream(const PipelineConfig& cfg) {
  std::vector<DownstreamSet> out;
  for (const auto& d : cfg.downstream) out.push_back(split_unseen(cfg.synth, d));
  return out;
}

TargetScore score_target(const ToyModel& model, const Shard& shard, const SubspaceView& target,
                         const PipelineConfig& cfg) {
  const auto dets = predict_batch(model, shard, target, model.loss.tau, cfg.eval.score_threshold);
  const auto report = evaluate(dets, shard, target, {cfg.eval.iou50_only});
  return {report.accuracy, report.map};
}

}  // namespace

const DownstreamSpec& PipelineConfig::downstream_set(const std::string& name) const {
  for (const auto& d : downstream) {
    if (d.name == name) return d;
  }
  fail(ErrorCode::BadConfig, "no downstream set named '" + name + "'");
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir) {
  StrictObject obj(doc, "");
  PipelineConfig cfg;
  cfg.synth = synth_spec_from_json(obj.child("synth"));
  const auto& downstream = obj.child("downstream");
  if (!downstream.is_null() && !downstream.is_array() && !downstream.empty()) {
    fail(ErrorCode::BadConfig, "'downstream' must be a list");
  }
  for (const auto& d : downstream) cfg.downstream.push_back(downstream_spec_from_json(d));
  cfg.train = train_config_from_json(obj.child("train"));
  cfg.loss = loss_config_from_json(obj.child("loss"));

  StrictObject eval(obj.child("eval"), "eval");
  cfg.eval.score_threshold = eval.get("score_threshold", cfg.eval.score_threshold);
  cfg.eval.iou50_only = eval.get("iou50_only", cfg.eval.iou50_only);
  eval.finish();

  StrictObject exp(obj.child("experiment"), "experiment");
  cfg.experiment.seeds = exp.get("seeds", cfg.experiment.seeds);
  cfg.experiment.transfer_set = exp.get<std::string>("transfer_set", "");
  cfg.experiment.zero_shot_set = exp.get<std::string>("zero_shot_set", "");
  exp.finish();

  if (obj.has("workdir")) {
    std::filesystem::path p = obj.require<std::string>("workdir");
    cfg.workdir = p.is_absolute() ? p : base_dir / p;
  } else {
    obj.child("workdir");
  }
  obj.finish();

  std::set<std::string> names;
  for (const auto& d : cfg.synth.datasets) names.insert(d.name);
  for (const auto& d : cfg.downstream) {
    if (!names.insert(d.name).second) {
      fail(ErrorCode::BadConfig, "downstream set '" + d.name + "' reuses a dataset name");
    }
  }
  if (!cfg.experiment.transfer_set.empty()) cfg.downstream_set(cfg.experiment.transfer_set);
  if (!cfg.experiment.zero_shot_set.empty()) cfg.downstream_set(cfg.experiment.zero_shot_set);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::BadConfig, path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(doc, path.parent_path());
}

nlohmann::json to_json(const PipelineConfig& cfg) {
  nlohmann::json downstream = nlohmann::json::array();
  for (const auto& d : cfg.downstream) downstream.push_back(to_json(d));
  nlohmann::json doc = {
      {"synth", to_json(cfg.synth)},
      {"downstream", std::move(downstream)},
      {"train", to_json(cfg.train)},
      {"loss", to_json(cfg.loss)},
      {"eval", {{"score_threshold", cfg.eval.score_threshold}, {"iou50_only", cfg.eval.iou50_only}}},
      {"experiment",
       {{"seeds", cfg.experiment.seeds},
        {"transfer_set", cfg.experiment.transfer_set},
        {"zero_shot_set", cfg.experiment.zero_shot_set}}}};
  if (cfg.workdir) doc["workdir"] = cfg.workdir->string();
  return doc;
}

std::string config_hash(const PipelineConfig& cfg) {
  auto doc = to_json(cfg);
  doc.erase("workdir");
  return io::fnv1a_hex(doc.dump());
}

SynthSpec restrict_datasets(const SynthSpec& spec, const std::vector<std::string>& subset) {
  if (subset.empty()) return spec;
  SynthSpec out = spec;
  out.datasets.clear();
  for (const auto& name : subset) {
    const auto it = std::find_if(spec.datasets.begin(), spec.datasets.end(),
                                 [&](const DatasetSpec& d) { return d.name == name; });
    if (it == spec.datasets.end()) {
      fail(ErrorCode::UnknownDataset, "no dataset named '" + name + "' in the synth spec");
    }
    out.datasets.push_back(*it);
  }
  return out;
}

double RunOutcome::mean_upstream_accuracy() const {
  if (upstream.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [name, score] : upstream) s += score.accuracy;
  return s / static_cast<double>(upstream.size());
}

nlohmann::json to_json(const RunOutcome& run) {
  nlohmann::json up = nlohmann::json::object(), down = nlohmann::json::object();
  for (const auto& [name, s] : run.upstream) up[name] = {{"accuracy", s.accuracy}, {"map", s.map}};
  for (const auto& [name, s] : run.downstream) {
    down[name] = {{"accuracy", s.accuracy}, {"map", s.map}};
  }
  return {{"seed", run.seed},
          {"datasets", run.datasets},
          {"hard_only", run.hard_only},
          {"upstream", std::move(up)},
          {"downstream", std::move(down)},
          {"initial_loss", run.initial_loss},
          {"final_loss", run.final_loss}};
}

RunOutcome run_training(const PipelineConfig& cfg, const SynthCorpus& corpus,
                        const std::vector<DownstreamSet>& downstream,
                        const std::vector<std::string>& datasets, bool hard_only,
                        std::uint64_t seed) {
  std::vector<LabeledEmbeddings> sets;
  std::vector<Shard> train_shards, eval_shards;
  for (const auto& name : datasets) {
    bool found = false;
    for (std::size_t i = 0; i < corpus.labelsets.size(); ++i) {
      if (corpus.labelsets[i].first.name != name) continue;
      sets.push_back(corpus.labelsets[i]);
      train_shards.push_back(corpus.train_shards[i]);
      eval_shards.push_back(corpus.eval_shards[i]);
      found = true;
    }
    if (!found) fail(ErrorCode::UnknownDataset, "no dataset named '" + name + "'");
  }
  const auto space = concat_label_spaces(sets);
  const auto sim = build_similarity_matrix(space.embeddings);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed;
  tcfg.hard_only = hard_only;
  const auto init = init_model(space.dim, corpus.spec.dim, cfg.loss, seed, space.checksum());
  const auto result = train(init, space, sim, train_shards, tcfg);

  RunOutcome run;
  run.seed = seed;
  run.datasets = datasets;
  run.hard_only = hard_only;
  run.initial_loss = result.report.trace.front().total;
  run.final_loss = result.report.trace.back().total;
  for (const auto& shard : eval_shards) {
    run.upstream[shard.dataset] =
        score_target(result.model, shard, subspace(space, shard.dataset), cfg);
  }
  for (const auto& d : downstream) {
    const auto view = external_subspace(d.labels.first, d.labels.second, result.model.dim);
    run.downstream[d.labels.first.name] = score_target(result.model, d.shard, view, cfg);
  }
  return run;
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

ScalingReport run_scaling_experiment(const PipelineConfig& cfg,
                                     const std::optional<std::filesystem::path>& partial_dir) {
  const auto& seeds = cfg.experiment.seeds;
  if (seeds.empty()) fail(ErrorCode::BadConfig, "experiment.seeds is empty");
  std::vector<std::string> order;
  for (const auto& d : cfg.synth.datasets) order.push_back(d.name);
  const std::size_t n_sets = order.size();

  // Per seed: nested full-loss runs for K = 1..N, then one hard-only
  // baseline per dataset.
  std::vector<std::vector<RunOutcome>> per_seed(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t s) {
    const auto seeded = with_seed(cfg, seeds[s]);
    const auto corpus = generate(seeded.synth);
    const auto downstream = make_downstream(seeded);
    auto& runs = per_seed[s];
    for (std::size_t k = 1; k <= n_sets; ++k) {
      const std::vector<std::string> prefix(order.begin(), order.begin() + static_cast<long>(k));
      runs.push_back(run_training(seeded, corpus, downstream, prefix, false, seeds[s]));
      persist(partial_dir, runs.back());
    }
    for (const auto& name : order) {
      runs.push_back(run_training(seeded, corpus, downstream, {name}, true, seeds[s]));
      persist(partial_dir, runs.back());
    }
  });

  ScalingReport report;
  report.config = to_json(cfg);
  for (std::size_t k = 1; k <= n_sets; ++k) {
    ScalingRow row;
    row.k = k;
    row.datasets.assign(order.begin(), order.begin() + static_cast<long>(k));
    row.seeds = seeds;
    std::vector<double> up_acc, up_map, tr_acc, tr_map;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto& run = per_seed[s][k - 1];
      row.runs.push_back(run);
      up_acc.push_back(run.mean_upstream_accuracy());
      double m = 0.0;
      for (const auto& [name, score] : run.upstream) m += score.map;
      up_map.push_back(m / static_cast<double>(run.upstream.size()));
      if (!cfg.experiment.transfer_set.empty()) {
        const auto& t = run.downstream.at(cfg.experiment.transfer_set);
        tr_acc.push_back(t.accuracy);
        tr_map.push_back(t.map);
      }
    }
    row.upstream_accuracy = summarize(up_acc);
    row.upstream_map = summarize(up_map);
    row.transfer_accuracy = summarize(tr_acc);
    row.transfer_map = summarize(tr_map);
    report.rows.push_back(std::move(row));
  }
  for (std::size_t i = 0; i < n_sets; ++i) {
    auto& runs = report.baselines[order[i]];
    for (std::size_t s = 0; s < seeds.size(); ++s) runs.push_back(per_seed[s][n_sets + i]);
  }
  return report;
}

nlohmann::json to_json(const ScalingReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : row.runs) runs.push_back(to_json(r));
    rows.push_back({{"k", row.k},
                    {"datasets", row.datasets},
                    {"seeds", row.seeds},
                    {"upstream_accuracy", to_json(row.upstream_accuracy)},
                    {"upstream_map", to_json(row.upstream_map)},
                    {"transfer_accuracy", to_json(row.transfer_accuracy)},
                    {"transfer_map", to_json(row.transfer_map)},
                    {"runs", std::move(runs)}});
  }
  nlohmann::json baselines = nlohmann::json::object();
  for (const auto& [name, runs] : report.baselines) {
    std::vector<double> acc;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& r : runs) {
      acc.push_back(r.upstream.at(name).accuracy);
      items.push_back(to_json(r));
    }
    baselines[name] = {{"accuracy", to_json(summarize(acc))}, {"runs", std::move(items)}};
  }
  return {{"rows", std::move(rows)},
          {"baselines", std::move(baselines)},
          {"config", report.config}};
}

AblationReport run_ablation(const PipelineConfig& cfg,
                            const std::optional<std::filesystem::path>& partial_dir) {
  const auto& seeds = cfg.experiment.seeds;
  if (seeds.empty()) fail(ErrorCode::BadConfig, "experiment.seeds is empty");
  if (cfg.experiment.zero_shot_set.empty()) {
    fail(ErrorCode::BadConfig, "experiment.zero_shot_set is required for the ablation");
  }
  if (!cfg.downstream_set(cfg.experiment.zero_shot_set).zero_shot) {
    fail(ErrorCode::BadConfig, "experiment.zero_shot_set must name a zero_shot downstream set");
  }
  std::vector<std::string> all;
  for (const auto& d : cfg.synth.datasets) all.push_back(d.name);

  AblationReport report;
  report.seeds = seeds;
  report.full_accuracy.resize(seeds.size());
  report.hard_only_accuracy.resize(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t s) {
    const auto seeded = with_seed(cfg, seeds[s]);
    const auto corpus = generate(seeded.synth);
    const auto downstream = make_downstream(seeded);
    const auto full = run_training(seeded, corpus, downstream, all, false, seeds[s]);
    const auto hard = run_training(seeded, corpus, downstream, all, true, seeds[s]);
    persist(partial_dir, full);
    persist(partial_dir, hard);
    report.full_accuracy[s] = full.downstream.at(cfg.experiment.zero_shot_set).accuracy;
    report.hard_only_accuracy[s] = hard.downstream.at(cfg.experiment.zero_shot_set).accuracy;
  });
  report.full = summarize(report.full_accuracy);
  report.hard_only = summarize(report.hard_only_accuracy);
  const double pooled =
      std::sqrt(0.5 * (report.full.sd * report.full.sd + report.hard_only.sd * report.hard_only.sd));
  const double diff = report.full.mean - report.hard_only.mean;
  report.effect_size = pooled > 0.0 ? diff / pooled : 0.0;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (report.full_accuracy[s] >= report.hard_only_accuracy[s]) ++report.seeds_full_not_worse;
  }
  report.config = to_json(cfg);
  return report;
}

nlohmann::json to_json(const AblationReport& report) {
  return {{"seeds", report.seeds},
          {"full_accuracy", report.full_accuracy},
          {"hard_only_accuracy", report.hard_only_accuracy},
          {"full", to_json(report.full)},
          {"hard_only", to_json(report.hard_only)},
          {"effect_size", report.effect_size},
          {"seeds_full_not_worse", report.seeds_full_not_worse},
          {"config", report.config}};
}

}  // namespace lsalign
