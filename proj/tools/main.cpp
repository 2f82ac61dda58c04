// metarec: meta-learned personalization pipeline for binary-response
// recommender models. Subcommands cover the two production flows
// (synthesize/ingest -> train -> embedgen -> serve) plus evaluation and
// sweep harnesses.
#include <cstdio>
#include <exception>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "metarec/config.hpp"
#include "metarec/ingest.hpp"
#include "metarec/store.hpp"
#include "metarec/training.hpp"

namespace {

using metarec::cli::Invocation;

// flag > config file > built-in default; the resolved view goes into the
// manifest so every run can be replayed.
Invocation resolve(const std::string& subcommand, const std::string& config_file,
                   const std::map<std::string, std::string>& flags) {
  Invocation inv;
  inv.subcommand = subcommand;
  if (!config_file.empty()) {
    const metarec::KvConfig kv = metarec::KvConfig::parse_file(config_file);
    for (const auto& [k, v] : kv.entries()) inv.config[k] = v;
  }
  for (const auto& [k, v] : flags) inv.config[k] = v;
  return inv;
}

struct CommonFlags {
  std::string config_file;
  std::string seed;
  std::string workers;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "key = value configuration file");
    cmd->add_option("--seed", seed, "run seed (overrides the config file)");
    cmd->add_option("--workers", workers,
                    "worker threads (overrides the config file)");
  }
  void merge(std::map<std::string, std::string>& flags) const {
    if (!seed.empty()) flags["seed"] = seed;
    if (!workers.empty()) flags["workers"] = workers;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learned personalization pipeline"};
  app.require_subcommand(1);

  std::map<std::string, std::string> flags;
  CommonFlags common;

  auto* synthesize = app.add_subcommand(
      "synthesize", "generate synthetic train/validation/test collections");
  std::string out_dir, format;
  synthesize->add_option("--out-dir", out_dir, "output directory")->required();
  synthesize->add_option("--format", format, "delimited|json-lines");
  common.attach(synthesize);

  auto* train = app.add_subcommand("train", "train a model checkpoint");
  std::string algorithm, data_dir, out, data_name, metrics;
  train->add_option("--algorithm", algorithm, "vanilla|maml|limaml")
      ->required();
  train->add_option("--data-dir", data_dir, "dataset directory")->required();
  train->add_option("--out", out, "checkpoint output path")->required();
  train->add_option("--data", data_name, "training file name (train.tsv)");
  train->add_option("--metrics", metrics, "metrics JSONL path");
  common.attach(train);

  auto* embedgen = app.add_subcommand(
      "embedgen", "generate a versioned meta-embedding snapshot");
  std::string checkpoint, snapshot;
  embedgen->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  embedgen->add_option("--data-dir", data_dir, "dataset directory")->required();
  embedgen->add_option("--out", out, "snapshot output path")->required();
  embedgen->add_option("--data", data_name,
                       "source file name (validation.tsv)");
  common.attach(embedgen);

  auto* serve = app.add_subcommand("serve", "score requests online");
  std::string mode, fallback, port;
  serve->add_option("--checkpoint", checkpoint, "trained checkpoint")
      ->required();
  serve->add_option("--snapshot", snapshot, "embedding snapshot");
  serve->add_option("--mode", mode, "stdio|socket (default stdio)");
  serve->add_option("--fallback", fallback, "zero|mean (default zero)");
  serve->add_option("--port", port, "socket port (default ephemeral)");
  common.attach(serve);

  auto* eval = app.add_subcommand("eval", "cohort evaluation report");
  std::string checkpoints, fine_tune, k_steps, task_alpha, cohort_threshold;
  eval->add_option("--data-dir", data_dir, "dataset directory")->required();
  eval->add_option("--out-dir", out_dir, "report directory")->required();
  eval->add_option("--checkpoints", checkpoints,
                   "name=path[;name=path...] columns")
      ->required();
  eval->add_option("--fine-tune", fine_tune, "both|yes|no (default both)");
  eval->add_option("--k", k_steps, "fine-tune gradient steps (default 5)");
  eval->add_option("--task-alpha", task_alpha,
                   "fine-tune learning rate (default 0.1)");
  eval->add_option("--cohort-threshold", cohort_threshold,
                   "small/large cohort boundary (default 25)");
  common.attach(eval);

  auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  std::string param, values, replicates;
  sweep->add_option("--data-dir", data_dir, "dataset directory")->required();
  sweep->add_option("--out-dir", out_dir, "output directory")->required();
  sweep->add_option("--param", param,
                    "inner_steps|dropout|task_lr|global_lr|pooling")
      ->required();
  sweep->add_option("--values", values, "comma-separated value list")
      ->required();
  sweep->add_option("--replicates", replicates, "replicates per value");
  sweep->add_option("--algorithm", algorithm, "vanilla|maml|limaml");
  common.attach(sweep);

  auto* export_cmd =
      app.add_subcommand("export", "export a snapshot to TSV");
  export_cmd->add_option("--snapshot", snapshot, "snapshot path")->required();
  export_cmd->add_option("--out", out, "TSV output path")->required();

  auto* replay = app.add_subcommand("replay", "re-run from a manifest");
  std::string manifest_path, replay_out_dir;
  replay->add_option("manifest", manifest_path, "manifest.json path")
      ->required();
  replay->add_option("--out-dir", replay_out_dir,
                     "redirect outputs to this directory");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto put = [&flags](const char* key, const std::string& value) {
      if (!value.empty()) flags[key] = value;
    };
    put("out_dir", out_dir);
    put("format", format);
    put("algorithm", algorithm);
    put("data_dir", data_dir);
    put("out", out);
    put("data", data_name);
    put("metrics", metrics);
    put("checkpoint", checkpoint);
    put("snapshot", snapshot);
    put("mode", mode);
    put("fallback", fallback);
    put("port", port);
    put("checkpoints", checkpoints);
    put("fine_tune", fine_tune);
    put("k", k_steps);
    put("task_alpha", task_alpha);
    put("cohort_threshold", cohort_threshold);
    put("param", param);
    put("values", values);
    put("replicates", replicates);
    common.merge(flags);

    if (replay->parsed()) {
      return metarec::cli::run_replay(manifest_path, replay_out_dir);
    }
    const std::string subcommand = app.get_subcommands().front()->get_name();
    return metarec::cli::dispatch(
        resolve(subcommand, common.config_file, flags));
  } catch (const metarec::TrainingDiverged& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return metarec::cli::kExitDiverged;
  } catch (const metarec::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return metarec::cli::kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return metarec::cli::kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return metarec::cli::kExitRuntime;
  }
}
