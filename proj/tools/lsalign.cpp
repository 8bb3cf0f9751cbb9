// lsalign: unified label spaces, similarity matrices, synthetic corpora,
// training, inference, evaluation and the scaling experiment.
//
// Exit codes: 0 ok, 1 invariant/assertion failure, 2 usage/config error, 3 I/O.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lsalign/embedding_store.hpp"
#include "lsalign/error.hpp"
#include "lsalign/eval.hpp"
#include "lsalign/inference.hpp"
#include "lsalign/io.hpp"
#include "lsalign/label_space.hpp"
#include "lsalign/pipeline.hpp"
#include "lsalign/similarity.hpp"
#include "lsalign/synth_data.hpp"
#include "lsalign/trainer.hpp"

namespace fs = std::filesystem;
using namespace lsalign;

namespace {

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadConfig:
    case ErrorCode::UnknownDataset:
      return kExitUsage;
    case ErrorCode::MissingFile:
    case ErrorCode::IoError:
    case ErrorCode::BadMagic:
    case ErrorCode::ParseError:
      return kExitIo;
    default:
      return kExitInvariant;
  }
}

[[noreturn]] void usage_error(const std::string& message) {
  throw Error(ErrorCode::BadConfig, message);
}

void require_directory(const fs::path& dir, const std::string& what) {
  if (!fs::is_directory(dir)) usage_error(what + " '" + dir.string() + "' is not a directory");
}

void require_file(const fs::path& file, const std::string& what) {
  if (!fs::is_regular_file(file)) usage_error(what + " '" + file.string() + "' does not exist");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

nlohmann::json file_checksums(const std::vector<fs::path>& files) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& f : files) out[f.string()] = io::fnv1a_hex(io::read_bytes(f));
  return out;
}

void write_provenance(const fs::path& dir, const nlohmann::json& config,
                      const std::vector<fs::path>& inputs) {
  io::write_json(dir / "provenance.json", {{"config", config}, {"inputs", file_checksums(inputs)}});
}

// ---------------------------------------------------------------------------
// Path-driven commands

int cmd_build_unified(const std::vector<std::string>& labelsets, const fs::path& out) {
  std::vector<LabeledEmbeddings> sets;
  std::vector<fs::path> inputs;
  for (const auto& p : labelsets) {
    require_directory(p, "labelset");
    sets.push_back(load_labelset(p));
    inputs.push_back(fs::path(p) / "embeddings.bin");
  }
  const auto space = concat_label_spaces(sets);
  save_unified(space, out);
  write_provenance(out, {{"labelsets", labelsets}}, inputs);
  std::cout << "n=" << space.size() << " dim=" << space.dim << "\n";
  for (const auto& src : space.sources) {
    std::cout << src.dataset << " count=" << src.count << " offset=" << src.offset << "\n";
  }
  return kExitOk;
}

int cmd_simmatrix(const fs::path& unified_dir, const fs::path& out) {
  require_directory(unified_dir, "unified label space");
  const auto space = load_unified(unified_dir);
  const auto sim = build_similarity_matrix(space.embeddings);
  save_similarity(sim, out);
  const auto checksum = io::fnv1a_hex(io::read_bytes(out));
  std::cout << "n=" << sim.n << " degenerate_rows=" << sim.epsilon_rows.size()
            << " checksum=" << checksum << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Config-driven pipeline. Artifacts live under the work directory, which
// defaults to <config dir>/runs/<config hash>:
//   synth/                      labelsets, shards, downstream sets, oracle
//   train_<datasets>/           unified space, S, checkpoint, log, report
//   train_<datasets>/detections per-target detections
//   train_<datasets>/eval       per-target reports

struct PipelineContext {
  PipelineConfig cfg;
  fs::path config_path;
  fs::path workdir;
  nlohmann::json resolved;
};

struct PipelineFlags {
  std::string config;
  std::string workdir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool hard_only = false;
};

PipelineContext make_context(const PipelineFlags& flags) {
  require_file(flags.config, "config");
  PipelineContext ctx;
  ctx.config_path = flags.config;
  ctx.cfg = load_pipeline_config(flags.config);
  if (flags.seed) {
    ctx.cfg.synth.seed = *flags.seed;
    ctx.cfg.train.seed = *flags.seed;
  }
  // The default work directory is keyed by the config plus seed, so runs
  // with --steps or --hard-only reuse the same synth output.
  if (!flags.workdir.empty()) {
    ctx.workdir = flags.workdir;
  } else if (ctx.cfg.workdir) {
    ctx.workdir = *ctx.cfg.workdir;
  } else {
    ctx.workdir = ctx.config_path.parent_path() / "runs" / config_hash(ctx.cfg);
  }
  if (flags.steps) {
    ctx.cfg.train.steps = *flags.steps;
    ctx.cfg.train.validate();
  }
  if (flags.hard_only) ctx.cfg.train.hard_only = true;
  ctx.resolved = to_json(ctx.cfg);
  ctx.resolved["synth"] = to_json(resolve(ctx.cfg.synth));
  return ctx;
}

fs::path synth_dir(const PipelineContext& ctx) { return ctx.workdir / "synth"; }

std::vector<std::string> dataset_names(const PipelineContext& ctx,
                                       const std::vector<std::string>& subset) {
  std::vector<std::string> names;
  for (const auto& d : restrict_datasets(ctx.cfg.synth, subset).datasets) names.push_back(d.name);
  return names;
}

fs::path run_dir(const PipelineContext& ctx, const std::vector<std::string>& datasets) {
  const std::string suffix = ctx.cfg.train.hard_only ? "_hl" : "";
  return ctx.workdir / ("train_" + join(datasets, "+") + suffix);
}

int cmd_synth(const PipelineContext& ctx) {
  const auto corpus = generate(ctx.cfg.synth);
  const auto dir = synth_dir(ctx);
  io::ensure_directory(dir / "shards");
  nlohmann::json oracle = nlohmann::json::object();
  for (std::size_t i = 0; i < corpus.labelsets.size(); ++i) {
    const auto& [labels, emb] = corpus.labelsets[i];
    save_labelset(labels, emb, dir / "labelsets" / labels.name);
    write_shard(corpus.train_shards[i], dir / "shards" / (labels.name + ".train.ndjson"));
    write_shard(corpus.eval_shards[i], dir / "shards" / (labels.name + ".eval.ndjson"));
    oracle[labels.name] = corpus.oracle.at(labels.name);
    std::cout << labels.name << ": labels=" << labels.size()
              << " train=" << corpus.train_shards[i].instances.size()
              << " eval=" << corpus.eval_shards[i].instances.size() << "\n";
  }
  for (const auto& spec : ctx.cfg.downstream) {
    const auto set = split_unseen(ctx.cfg.synth, spec);
    save_labelset(set.labels.first, set.labels.second, dir / "downstream" / spec.name);
    write_shard(set.shard, dir / "shards" / (spec.name + ".downstream.ndjson"));
    oracle[spec.name] = set.concepts;
    std::cout << spec.name << ": labels=" << set.labels.first.size()
              << " instances=" << set.shard.instances.size()
              << (spec.zero_shot ? " (zero-shot)" : " (direct transfer)") << "\n";
  }
  io::write_json(dir / "oracle.json", oracle);
  io::write_json(dir / "config.json", ctx.resolved);
  write_provenance(dir, ctx.resolved, {ctx.config_path});
  std::cout << "wrote " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const PipelineContext& ctx, const std::vector<std::string>& subset) {
  const auto datasets = dataset_names(ctx, subset);
  const auto sdir = synth_dir(ctx);
  require_directory(sdir, "synth output (run `lsalign synth` first)");
  std::vector<LabeledEmbeddings> sets;
  std::vector<Shard> shards;
  std::vector<fs::path> inputs{ctx.config_path};
  for (const auto& name : datasets) {
    sets.push_back(load_labelset(sdir / "labelsets" / name));
    const auto shard_path = sdir / "shards" / (name + ".train.ndjson");
    shards.push_back(read_shard(shard_path));
    inputs.push_back(sdir / "labelsets" / name / "embeddings.bin");
    inputs.push_back(shard_path);
  }
  const auto space = concat_label_spaces(sets);
  const auto sim = build_similarity_matrix(space.embeddings);

  const auto out = run_dir(ctx, datasets);
  io::ensure_directory(out);
  save_unified(space, out / "unified");
  save_similarity(sim, out / "sim" / "simmatrix.bin");

  const auto init =
      init_model(space.dim, shards.front().dim, ctx.cfg.loss, ctx.cfg.train.seed, space.checksum());
  std::ostringstream log;
  TrainHooks hooks;
  hooks.on_step = [&](const StepRecord& r) {
    log << nlohmann::json{{"step", r.step}, {"hard", r.hard}, {"soft", r.soft},
                          {"total", r.total}, {"lr", r.lr}}
               .dump()
        << '\n';
  };
  hooks.on_checkpoint = [&](std::size_t step, const ToyModel& model, const OptimizerState& opt) {
    save_checkpoint(out / ("ckpt_step" + std::to_string(step)), model, opt);
  };
  const auto result = train(init, space, sim, shards, ctx.cfg.train, hooks);
  save_checkpoint(out / "ckpt", result.model, result.optimizer,
                  {{"datasets", datasets}, {"train", to_json(ctx.cfg.train)}});
  io::write_text(out / "train_log.ndjson", log.str());

  nlohmann::json report = {{"datasets", datasets},
                           {"train_accuracy", result.report.train_accuracy},
                           {"initial_loss", result.report.trace.front().total},
                           {"final_loss", result.report.trace.back().total},
                           {"wall_seconds", result.report.wall_seconds},
                           {"config", ctx.resolved}};
  io::write_json(out / "report.json", report);
  write_provenance(out, ctx.resolved, inputs);
  std::cout << "n=" << space.size() << " steps=" << ctx.cfg.train.steps
            << " final_loss=" << result.report.trace.back().total << "\n";
  for (const auto& [name, acc] : result.report.train_accuracy) {
    std::cout << name << " train_accuracy=" << acc << "\n";
  }
  return kExitOk;
}

struct Target {
  std::string name;
  SubspaceView view;
  fs::path shard_path;
};

std::vector<Target> inference_targets(const PipelineContext& ctx, const UnifiedLabelSpace& space,
                                      std::size_t model_dim) {
  const auto sdir = synth_dir(ctx);
  std::vector<Target> targets;
  for (const auto& src : space.sources) {
    targets.push_back({src.dataset, subspace(space, src.dataset),
                       sdir / "shards" / (src.dataset + ".eval.ndjson")});
  }
  for (const auto& spec : ctx.cfg.downstream) {
    const auto [labels, emb] = load_labelset(sdir / "downstream" / spec.name);
    targets.push_back({spec.name, external_subspace(labels, emb, model_dim),
                       sdir / "shards" / (spec.name + ".downstream.ndjson")});
  }
  return targets;
}

int cmd_infer(const PipelineContext& ctx, const std::vector<std::string>& subset,
              std::optional<double> tau_override) {
  const auto out = run_dir(ctx, dataset_names(ctx, subset));
  require_directory(out / "ckpt", "checkpoint (run `lsalign train` first)");
  const auto space = load_unified(out / "unified");
  // Swapping in downstream label spaces is the intended use; the unified
  // space itself must still match.
  const auto ckpt = load_checkpoint(out / "ckpt", space.checksum(), false);
  const double tau = tau_override.value_or(ckpt.model.loss.tau);
  io::ensure_directory(out / "detections");
  std::vector<fs::path> inputs{out / "ckpt" / "ckpt.bin"};
  for (const auto& target : inference_targets(ctx, space, ckpt.model.dim)) {
    const auto shard = read_shard(target.shard_path);
    const auto dets =
        predict_batch(ckpt.model, shard, target.view, tau, ctx.cfg.eval.score_threshold);
    write_detections(dets, out / "detections" / (target.name + ".ndjson"));
    inputs.push_back(target.shard_path);
    std::cout << target.name << ": detections=" << dets.size() << "\n";
  }
  nlohmann::json resolved = ctx.resolved;
  resolved["infer"] = {{"tau", tau}};
  write_provenance(out / "detections", resolved, inputs);
  return kExitOk;
}

int cmd_eval(const PipelineContext& ctx, const std::vector<std::string>& subset) {
  const auto out = run_dir(ctx, dataset_names(ctx, subset));
  require_directory(out / "detections", "detections (run `lsalign infer` first)");
  const auto space = load_unified(out / "unified");
  io::ensure_directory(out / "eval");
  std::vector<fs::path> inputs;
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& target : inference_targets(ctx, space, space.dim)) {
    const auto det_path = out / "detections" / (target.name + ".ndjson");
    const auto dets = read_detections(det_path);
    const auto shard = read_shard(target.shard_path);
    const auto report = evaluate(dets, shard, target.view, {ctx.cfg.eval.iou50_only});
    io::write_json(out / "eval" / (target.name + ".json"), to_json(report));
    io::write_text(out / "eval" / (target.name + ".txt"), format_table(report));
    inputs.push_back(det_path);
    inputs.push_back(target.shard_path);
    summary[target.name] = {{"map", report.map}, {"accuracy", report.accuracy}};
    std::cout << format_table(report) << "\n";
  }
  io::write_json(out / "eval" / "summary.json", summary);
  write_provenance(out / "eval", ctx.resolved, inputs);
  return kExitOk;
}

std::string format_scaling(const ScalingReport& report) {
  std::ostringstream out;
  out << std::fixed;
  out.precision(4);
  out << "K  datasets              upstream_acc        transfer_acc        transfer_mAP\n";
  for (const auto& row : report.rows) {
    std::string names = join(row.datasets, "+");
    names.resize(std::max<std::size_t>(names.size(), 20), ' ');
    out << row.k << "  " << names << "  " << row.upstream_accuracy.mean << " +- "
        << row.upstream_accuracy.sd << "  " << row.transfer_accuracy.mean << " +- "
        << row.transfer_accuracy.sd << "  " << row.transfer_map.mean << " +- "
        << row.transfer_map.sd << "\n";
  }
  out << "\nsingle-dataset baselines (hard label assignment only):\n";
  for (const auto& [name, runs] : report.baselines) {
    std::vector<double> acc;
    for (const auto& r : runs) acc.push_back(r.upstream.at(name).accuracy);
    const auto s = summarize(acc);
    out << "  " << name << "  " << s.mean << " +- " << s.sd << "\n";
  }
  return out.str();
}

int cmd_scaling(const PipelineContext& ctx, const fs::path& out) {
  if (out.has_parent_path()) io::ensure_directory(out.parent_path());
  const fs::path runs(out.string() + ".runs");
  const auto report = run_scaling_experiment(ctx.cfg, runs);
  write_provenance(runs, ctx.resolved, {ctx.config_path});
  auto doc = to_json(report);
  doc["config"] = ctx.resolved;
  io::write_json(out, doc);
  std::cout << format_scaling(report);
  return kExitOk;
}

int cmd_ablation(const PipelineContext& ctx, const fs::path& out) {
  if (out.has_parent_path()) io::ensure_directory(out.parent_path());
  const fs::path runs(out.string() + ".runs");
  const auto report = run_ablation(ctx.cfg, runs);
  write_provenance(runs, ctx.resolved, {ctx.config_path});
  auto doc = to_json(report);
  doc["config"] = ctx.resolved;
  io::write_json(out, doc);
  std::cout << std::fixed;
  std::cout.precision(4);
  std::cout << "zero-shot accuracy, hl+sl: " << report.full.mean << " +- " << report.full.sd
            << "\nzero-shot accuracy, hl only: " << report.hard_only.mean << " +- "
            << report.hard_only.sd << "\neffect size: " << report.effect_size
            << "\nseeds where hl+sl >= hl: " << report.seeds_full_not_worse << "/"
            << report.seeds.size() << "\n";
  return kExitOk;
}

void add_pipeline_flags(CLI::App* cmd, PipelineFlags& flags) {
  cmd->add_option("--config", flags.config, "Pipeline config (JSON)")->required();
  cmd->add_option("--workdir", flags.workdir,
                  "Artifact directory (default: <config dir>/runs/<config hash>)");
  cmd->add_option("--seed", flags.seed, "Override synth.seed and train.seed");
  cmd->add_option("--steps", flags.steps, "Override train.steps");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified label-space training toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> labelsets;
  std::string out;
  auto* build = app.add_subcommand("build-unified", "Concatenate label sets into one space");
  build->add_option("--labelsets", labelsets, "Labelset directories, in dataset order")
      ->required();
  build->add_option("--out", out, "Output directory")->required();

  std::string unified;
  auto* simmatrix = app.add_subcommand("simmatrix", "Compute the label similarity matrix");
  simmatrix->add_option("--unified", unified, "Unified label space directory")->required();
  simmatrix->add_option("--out", out, "Output matrix file (simmeta.json is written beside it)")
      ->required();

  PipelineFlags flags;
  std::string datasets;
  std::optional<double> tau;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic corpus");
  add_pipeline_flags(synth, flags);

  auto* train_cmd = app.add_subcommand("train", "Train the projection head");
  add_pipeline_flags(train_cmd, flags);
  train_cmd->add_option("--datasets", datasets, "Comma-separated dataset subset, in order");
  train_cmd->add_flag("--hard-only", flags.hard_only,
                      "Hard label assignment only (baseline runs, written to train_<datasets>_hl)");

  auto* infer = app.add_subcommand("infer", "Score eval and downstream shards");
  add_pipeline_flags(infer, flags);
  infer->add_option("--datasets", datasets, "Dataset subset the model was trained on");
  infer->add_option("--tau", tau, "Override the checkpoint temperature");
  infer->add_flag("--hard-only", flags.hard_only, "Use the hard-only run");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate detections");
  add_pipeline_flags(eval_cmd, flags);
  eval_cmd->add_option("--datasets", datasets, "Dataset subset the model was trained on");
  eval_cmd->add_flag("--hard-only", flags.hard_only, "Use the hard-only run");

  auto* scaling = app.add_subcommand("scaling-experiment",
                                     "Nested K-dataset runs across seeds with a trend report");
  add_pipeline_flags(scaling, flags);
  scaling->add_option("--out", out, "Report file (JSON)")->required();

  auto* ablation = app.add_subcommand("ablation", "hl+sl vs hl-only zero-shot comparison");
  add_pipeline_flags(ablation, flags);
  ablation->add_option("--out", out, "Report file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (build->parsed()) return cmd_build_unified(labelsets, out);
    if (simmatrix->parsed()) return cmd_simmatrix(unified, out);
    const auto ctx = make_context(flags);
    const auto subset = split_list(datasets);
    if (synth->parsed()) return cmd_synth(ctx);
    if (train_cmd->parsed()) return cmd_train(ctx, subset);
    if (infer->parsed()) return cmd_infer(ctx, subset, tau);
    if (eval_cmd->parsed()) return cmd_eval(ctx, subset);
    if (scaling->parsed()) return cmd_scaling(ctx, out);
    if (ablation->parsed()) return cmd_ablation(ctx, out);
  } catch (const Error& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << one_line(e.what()) << "\n";
    return kExitInvariant;
  }
  return kExitUsage;
}
