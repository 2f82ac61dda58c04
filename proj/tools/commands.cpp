#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "metarec/config.hpp"
#include "metarec/eval.hpp"
#include "metarec/ingest.hpp"
#include "metarec/manifest.hpp"
#include "metarec/serving.hpp"
#include "metarec/store.hpp"
#include "metarec/sweep.hpp"
#include "metarec/synthetic.hpp"
#include "metarec/training.hpp"

namespace metarec::cli {

namespace fs = std::filesystem;

const std::string& Invocation::at(const std::string& key) const {
  const auto it = config.find(key);
  if (it == config.end()) {
    throw ConfigError("missing config key '" + key + "'");
  }
  return it->second;
}

std::string Invocation::get(const std::string& key,
                            const std::string& fallback) const {
  const auto it = config.find(key);
  return it == config.end() ? fallback : it->second;
}

namespace {

KvConfig kv_from(const Invocation& inv) {
  KvConfig kv;
  for (const auto& [k, v] : inv.config) kv.set(k, v);
  return kv;
}

RunManifest start_manifest(const Invocation& inv) {
  RunManifest m;
  m.subcommand = inv.subcommand;
  m.config = inv.config;
  m.started_at = now_iso8601();
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& path) {
  m.finished_at = now_iso8601();
  write_manifest(m, path);
}

TaskCollection load_collection(const fs::path& path) {
  const FileFormat format = path.extension() == ".jsonl"
                                ? FileFormat::kJsonLines
                                : FileFormat::kDelimited;
  return ingest(path, format, {"task_key"});
}

// Train-time view: per-task cap, then the chronological support/query split.
TaskCollection prepare_train(const TaskCollection& raw,
                             const ModelArchConfig& arch) {
  return split_support_query(
      cap_samples(raw, static_cast<std::size_t>(arch.cap)),
      arch.support_fraction);
}

void write_metrics(const TrainReport& report, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics " + path.string());
  for (const StepRecord& s : report.steps) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["loss"] = s.loss;
    j["lr"] = s.lr;
    j["grad_norm"] = s.grad_norm;
    j["wall_ms"] = s.wall_ms;
    out << j.dump() << '\n';
  }
}

ModelBundle build_bundle(const std::string& algorithm,
                         const ModelArchConfig& arch,
                         const TaskCollection& train, std::uint64_t seed) {
  if (algorithm == "limaml") {
    if (arch.meta_block == "id-embedding") {
      std::vector<std::string> keys;
      for (const auto& [key, task] : train.tasks) keys.push_back(key);
      return make_id_bundle(train.meta_dim, train.other_dim,
                            arch.embedding_dim, keys, arch.global_hidden,
                            arch.feed_meta_to_global, seed);
    }
    if (arch.meta_block != "mlp") {
      throw ConfigError("meta_block must be 'mlp' or 'id-embedding' for limaml");
    }
    return make_mlp_bundle(train.meta_dim, train.other_dim, arch.meta_hidden,
                           arch.embedding_dim, arch.global_hidden,
                           arch.feed_meta_to_global, seed);
  }
  return make_plain_bundle(train.meta_dim, train.other_dim, arch.hidden, seed);
}

std::vector<std::string> merged_train_keys() {
  std::vector<std::string> keys = train_config_keys();
  const auto& arch = model_arch_keys();
  keys.insert(keys.end(), arch.begin(), arch.end());
  return keys;
}

}  // namespace

int run_synthesize(const Invocation& inv) {
  const KvConfig kv = kv_from(inv);
  const fs::path out_dir = inv.at("out_dir");
  KvConfig spec_kv;
  for (const auto& [k, v] : inv.config) {
    if (k != "out_dir" && k != "format") spec_kv.set(k, v);
  }
  spec_kv.check_known_keys(synthetic_spec_keys());
  const SyntheticSpec spec = synthetic_spec_from(spec_kv);
  const FileFormat format =
      format_from_string(inv.get("format", "delimited"));
  const std::string ext = format == FileFormat::kDelimited ? ".tsv" : ".jsonl";

  RunManifest manifest = start_manifest(inv);
  manifest.seed = spec.seed;
  fs::create_directories(out_dir);
  const SyntheticSplits splits = synthesize(spec);
  for (const auto& [name, coll] :
       std::initializer_list<std::pair<const char*, const TaskCollection*>>{
           {"train", &splits.train},
           {"validation", &splits.validation},
           {"test", &splits.test}}) {
    const fs::path p = out_dir / (std::string(name) + ext);
    export_collection(*coll, p, format);
    manifest.outputs.push_back(p.string());
    std::fprintf(stderr, "wrote %s (%zu tasks, %zu samples)\n",
                 p.string().c_str(), coll->task_count(), coll->sample_count());
  }
  finish_manifest(manifest, out_dir / "manifest.json");
  return kExitOk;
}

int run_train(const Invocation& inv) {
  KvConfig kv = kv_from(inv);
  const std::string algorithm = inv.at("algorithm");
  if (algorithm != "vanilla" && algorithm != "maml" && algorithm != "limaml") {
    throw ConfigError("algorithm must be vanilla|maml|limaml, got '" +
                      algorithm + "'");
  }
  const fs::path data_dir = inv.at("data_dir");
  const fs::path out = inv.at("out");
  const std::string data_name = inv.get("data", "train.tsv");

  KvConfig train_kv;
  for (const auto& [k, v] : inv.config) {
    if (k == "algorithm" || k == "data_dir" || k == "out" || k == "data" ||
        k == "metrics") {
      continue;
    }
    train_kv.set(k, v);
  }
  train_kv.check_known_keys(merged_train_keys());
  const TrainConfig config = train_config_from(train_kv);
  const ModelArchConfig arch = model_arch_from(train_kv);

  const fs::path train_path = data_dir / data_name;
  const TaskCollection raw = load_collection(train_path);
  const TaskCollection train = prepare_train(raw, arch);

  RunManifest manifest = start_manifest(inv);
  manifest.seed = config.seed;
  manifest.inputs.push_back(train_path.string());

  TrainResult result;
  if (algorithm == "vanilla") {
    const MlpSpec spec =
        classifier_spec(train.meta_dim + train.other_dim, arch.hidden);
    result = vanilla_train(train, spec, config);
  } else if (algorithm == "maml") {
    const MlpSpec spec =
        classifier_spec(train.meta_dim + train.other_dim, arch.hidden);
    result = maml_train(train, spec, config);
  } else {
    const ModelBundle bundle = build_bundle(algorithm, arch, train, config.seed);
    result = limaml_train(train, bundle, config);
  }

  Checkpoint ckpt;
  ckpt.algorithm = algorithm;
  ckpt.bundle = result.bundle;
  nlohmann::json config_json;
  for (const auto& [k, v] : train_kv.entries()) config_json[k] = v;
  ckpt.config_json = config_json.dump();
  nlohmann::json meta_json = {{"tool_version", kToolVersion},
                              {"seed", config.seed},
                              {"algorithm", algorithm}};
  ckpt.metadata_json = meta_json.dump();
  write_checkpoint(ckpt, out);
  manifest.outputs.push_back(out.string());

  const fs::path metrics_path = inv.get("metrics", out.string() + ".metrics.jsonl");
  write_metrics(result.report, metrics_path);
  manifest.outputs.push_back(metrics_path.string());

  std::fprintf(stderr,
               "trained %s on %zu tasks: final loss %.6f, %zu steps, %.0f ms\n",
               algorithm.c_str(), train.task_count(),
               result.report.steps.empty() ? 0.0
                                           : result.report.steps.back().loss,
               result.report.steps.size(), result.report.total_wall_ms);
  finish_manifest(manifest, out.string() + ".manifest.json");
  return kExitOk;
}

int run_embedgen(const Invocation& inv) {
  const fs::path checkpoint_path = inv.at("checkpoint");
  const fs::path data_dir = inv.at("data_dir");
  const std::string data_name = inv.get("data", "validation.tsv");
  const fs::path out = inv.at("out");
  const int workers = std::stoi(inv.get("workers", "1"));

  KvConfig eg_kv;
  for (const auto& [k, v] : inv.config) {
    if (k == "checkpoint" || k == "data_dir" || k == "data" || k == "out" ||
        k == "workers") {
      continue;
    }
    eg_kv.set(k, v);
  }
  eg_kv.check_known_keys(embedgen_config_keys());
  const EmbedGenConfig config = embedgen_config_from(eg_kv);

  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  if (ckpt.bundle.meta_arch.kind == MetaBlockKind::kNone) {
    throw ConfigError("checkpoint '" + checkpoint_path.string() +
                      "' has no meta block; embedding generation needs a "
                      "limaml checkpoint");
  }
  const fs::path data_path = data_dir / data_name;
  const TaskCollection data = load_collection(data_path);
  if (data.meta_dim != ckpt.bundle.meta_dim ||
      data.other_dim != ckpt.bundle.other_dim) {
    throw ConfigError("checkpoint expects " +
                      std::to_string(ckpt.bundle.meta_dim) + "+" +
                      std::to_string(ckpt.bundle.other_dim) +
                      " features but the data has " +
                      std::to_string(data.meta_dim) + "+" +
                      std::to_string(data.other_dim));
  }

  RunManifest manifest = start_manifest(inv);
  manifest.seed = 0;
  manifest.inputs = {checkpoint_path.string(), data_path.string()};

  const EmbedGenResult gen =
      generate_embeddings(data, ckpt.bundle, config, workers);
  const EmbeddingSnapshot snapshot =
      make_snapshot(gen.embeddings, config.version,
                    ckpt.bundle.embedding_dim());
  write_snapshot(snapshot, out);
  manifest.outputs.push_back(out.string());

  if (snapshot.count() == 0) {
    std::fprintf(stderr, "warning: no eligible tasks in the window\n");
  }
  std::fprintf(stderr,
               "snapshot %s: %zu embeddings (dim %zu), skipped %zu sparse, "
               "%zu non-finite\n",
               out.string().c_str(), snapshot.count(), snapshot.dim,
               gen.skipped_no_samples, gen.skipped_non_finite);
  finish_manifest(manifest, out.string() + ".manifest.json");
  return kExitOk;
}

int run_serve(const Invocation& inv) {
  const Checkpoint ckpt = read_checkpoint(inv.at("checkpoint"));
  EmbeddingSnapshot snapshot;
  if (inv.config.contains("snapshot")) {
    snapshot = read_snapshot(inv.at("snapshot"));
  } else if (ckpt.bundle.meta_arch.kind != MetaBlockKind::kNone) {
    throw ConfigError("serving a limaml checkpoint needs --snapshot");
  }
  const Fallback fallback = fallback_from_string(inv.get("fallback", "zero"));
  const Scorer scorer(ckpt.bundle, std::move(snapshot), fallback);

  const std::string mode = inv.get("mode", "stdio");
  if (mode == "stdio") {
    batch_score(scorer, std::cin, std::cout);
    return kExitOk;
  }
  if (mode != "socket") {
    throw ConfigError("mode must be stdio|socket, got '" + mode + "'");
  }
  const int port = std::stoi(inv.get("port", "0"));
  SocketServer server(scorer, port);
  std::fprintf(stderr, "listening on 127.0.0.1:%d\n", server.port());
  std::fflush(stderr);
  server.run();
  return kExitOk;
}

namespace {

struct EvalColumn {
  std::string name;
  std::string fine_tune;  // "no" | "yes"
  EvalReport report;
};

std::string format_table(const std::vector<EvalColumn>& columns) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-28s", "cohort");
  out += buf;
  for (const EvalColumn& c : columns) {
    std::snprintf(buf, sizeof(buf), " | %18s",
                  (c.name + "/ft=" + c.fine_tune).c_str());
    out += buf;
  }
  out += '\n';
  const double base_overall = columns.front().report.overall.value;
  std::vector<double> base_cohorts;
  for (const CohortStat& s : columns.front().report.cohorts) {
    base_cohorts.push_back(s.auc.value);
  }
  const auto emit_row = [&](const std::string& label,
                            const std::function<double(const EvalColumn&)>& get,
                            double base) {
    std::snprintf(buf, sizeof(buf), "%-28s", label.c_str());
    out += buf;
    for (const EvalColumn& c : columns) {
      const double v = get(c);
      const AucGain gain = auc_gain(v, base);
      std::snprintf(buf, sizeof(buf), " | %8.4f (%+5.2f%%)", v,
                    gain.relative_pct);
      out += buf;
    }
    out += '\n';
  };
  emit_row("all tasks",
           [](const EvalColumn& c) { return c.report.overall.value; },
           base_overall);
  for (std::size_t i = 0; i < columns.front().report.cohorts.size(); ++i) {
    const CohortStat& base_stat = columns.front().report.cohorts[i];
    emit_row("tasks " + std::string(base_stat.name == "small"
                                        ? "with < threshold samples"
                                        : "with >= threshold samples"),
             [i](const EvalColumn& c) { return c.report.cohorts[i].auc.value; },
             base_cohorts[i]);
  }
  return out;
}

std::string eval_csv(const std::vector<EvalColumn>& columns) {
  std::string out =
      "model,fine_tune,cohort,auc,gain_pct_vs_baseline,gain_abs_vs_baseline,"
      "tasks,samples\n";
  char buf[64];
  const EvalReport& base = columns.front().report;
  for (const EvalColumn& c : columns) {
    const auto emit = [&](const std::string& cohort, const AucResult& auc_v,
                          double base_v, std::size_t tasks,
                          std::size_t samples) {
      const AucGain gain = auc_gain(auc_v.value, base_v);
      out += c.name + ',' + c.fine_tune + ',' + cohort + ',';
      std::snprintf(buf, sizeof(buf), "%.6f", auc_v.value);
      out += buf;
      std::snprintf(buf, sizeof(buf), ",%.4f", gain.relative_pct);
      out += buf;
      std::snprintf(buf, sizeof(buf), ",%.6f", gain.absolute);
      out += buf;
      out += ',' + std::to_string(tasks) + ',' + std::to_string(samples) + '\n';
    };
    emit("all", c.report.overall, base.overall.value, c.report.task_count,
         c.report.scores.size());
    for (std::size_t i = 0; i < c.report.cohorts.size(); ++i) {
      emit(c.report.cohorts[i].name, c.report.cohorts[i].auc,
           base.cohorts[i].auc.value, c.report.cohorts[i].task_count,
           c.report.cohorts[i].sample_count);
    }
  }
  return out;
}

}  // namespace

int run_eval(const Invocation& inv) {
  const fs::path data_dir = inv.at("data_dir");
  const fs::path out_dir = inv.at("out_dir");
  const std::string ft_mode = inv.get("fine_tune", "both");
  if (ft_mode != "both" && ft_mode != "yes" && ft_mode != "no") {
    throw ConfigError("fine_tune must be both|yes|no");
  }

  // checkpoints come as "name=path" pairs joined by ';'
  std::vector<std::pair<std::string, std::string>> entries;
  {
    const std::string spec = inv.at("checkpoints");
    std::istringstream in(spec);
    std::string item;
    while (std::getline(in, item, ';')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("checkpoint spec must be name=path, got '" + item +
                          "'");
      }
      entries.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
  }
  if (entries.empty()) throw ConfigError("no checkpoints given");

  EvalProtocol protocol;
  protocol.fine_tune_steps = std::stoi(inv.get("k", "5"));
  protocol.fine_tune_alpha = std::stod(inv.get("task_alpha", "0.1"));
  protocol.cohort_threshold =
      static_cast<std::size_t>(std::stoul(inv.get("cohort_threshold", "25")));

  const TaskCollection validation =
      load_collection(data_dir / inv.get("validation", "validation.tsv"));
  const TaskCollection test =
      load_collection(data_dir / inv.get("test", "test.tsv"));

  RunManifest manifest = start_manifest(inv);
  manifest.inputs = {(data_dir / inv.get("validation", "validation.tsv")).string(),
                     (data_dir / inv.get("test", "test.tsv")).string()};

  std::vector<EvalColumn> columns;
  for (const auto& [name, path] : entries) {
    manifest.inputs.push_back(path);
    const Checkpoint ckpt = read_checkpoint(path);
    for (const std::string mode : {"no", "yes"}) {
      if (ft_mode != "both" && mode != ft_mode) continue;
      EvalProtocol p = protocol;
      p.mode = mode == "yes" ? EvalMode::kFineTune : EvalMode::kNoFineTune;
      EvalColumn col;
      col.name = name;
      col.fine_tune = mode;
      col.report = evaluate(ckpt.bundle, p, validation, test);
      columns.push_back(std::move(col));
    }
  }

  fs::create_directories(out_dir);
  const std::string table = format_table(columns);
  const std::string csv = eval_csv(columns);
  {
    std::ofstream t(out_dir / "report.txt", std::ios::binary | std::ios::trunc);
    t << table;
    std::ofstream c(out_dir / "report.csv", std::ios::binary | std::ios::trunc);
    c << csv;
  }
  std::fputs(table.c_str(), stdout);
  manifest.outputs = {(out_dir / "report.txt").string(),
                      (out_dir / "report.csv").string()};
  finish_manifest(manifest, out_dir / "manifest.json");
  return kExitOk;
}

int run_sweep(const Invocation& inv) {
  const fs::path data_dir = inv.at("data_dir");
  const fs::path out_dir = inv.at("out_dir");

  SweepSpec spec;
  spec.param = sweep_param_from_string(inv.at("param"));
  {
    std::istringstream in(inv.at("values"));
    std::string v;
    while (std::getline(in, v, ',')) spec.values.push_back(v);
  }
  spec.replicates = std::stoi(inv.get("replicates", "1"));
  spec.validate();

  KvConfig train_kv;
  for (const auto& [k, v] : inv.config) {
    if (k == "data_dir" || k == "out_dir" || k == "param" || k == "values" ||
        k == "replicates" || k == "algorithm" || k == "k" ||
        k == "task_alpha" || k == "pooling_version" || k == "window_days" ||
        k == "vanilla_baseline") {
      continue;
    }
    train_kv.set(k, v);
  }
  train_kv.check_known_keys(merged_train_keys());

  SweepContext context;
  context.algorithm = inv.get("algorithm", "limaml");
  context.base_config = train_config_from(train_kv);
  const ModelArchConfig arch = model_arch_from(train_kv);
  context.meta_hidden = arch.meta_hidden;
  context.embedding_dim = arch.embedding_dim;
  context.global_hidden = arch.global_hidden;
  context.plain_hidden = arch.hidden;
  context.feed_meta_to_global = arch.feed_meta_to_global;
  context.protocol.mode = EvalMode::kFineTune;
  context.protocol.fine_tune_steps = std::stoi(inv.get("k", "5"));
  context.protocol.fine_tune_alpha =
      std::stod(inv.get("task_alpha", std::to_string(context.base_config.alpha)));
  context.embed_config.k = context.protocol.fine_tune_steps;
  context.embed_config.alpha = context.protocol.fine_tune_alpha;
  context.embed_config.window_days =
      std::stoi(inv.get("window_days", "3650"));
  context.embed_config.version = inv.get("pooling_version", "2026-01-01");
  context.vanilla_baseline = inv.get("vanilla_baseline", "true") == "true";

  const TaskCollection train = prepare_train(
      load_collection(data_dir / inv.get("data", "train.tsv")), arch);
  const TaskCollection validation =
      load_collection(data_dir / inv.get("validation", "validation.tsv"));
  const TaskCollection test =
      load_collection(data_dir / inv.get("test", "test.tsv"));

  RunManifest manifest = start_manifest(inv);
  manifest.seed = context.base_config.seed;

  const std::vector<SweepRow> rows =
      run_sweep(spec, context, train, validation, test);
  fs::create_directories(out_dir);
  const fs::path csv_path = out_dir / "sweep.csv";
  {
    std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
    out << sweep_csv(spec, rows);
  }
  for (const SweepRow& r : rows) {
    std::fprintf(stderr, "%s=%s rep=%d auc=%.4f gain=%+.2f%% wall=%.0fms%s\n",
                 to_string(spec.param).c_str(), r.value.c_str(), r.replicate,
                 r.auc, r.gain_pct, r.train_wall_ms,
                 r.failed ? (" FAILED: " + r.error).c_str() : "");
  }
  manifest.outputs = {csv_path.string()};
  finish_manifest(manifest, out_dir / "manifest.json");
  return kExitOk;
}

int run_export(const Invocation& inv) {
  const fs::path snapshot_path = inv.at("snapshot");
  const fs::path out = inv.at("out");
  const EmbeddingSnapshot snapshot = read_snapshot(snapshot_path);
  export_snapshot_tsv(snapshot, out);
  RunManifest manifest = start_manifest(inv);
  manifest.inputs = {snapshot_path.string()};
  manifest.outputs = {out.string()};
  std::fprintf(stderr, "exported %zu records to %s\n", snapshot.count(),
               out.string().c_str());
  finish_manifest(manifest, out.string() + ".manifest.json");
  return kExitOk;
}

int run_replay(const std::filesystem::path& manifest_path,
               const std::string& out_dir) {
  const RunManifest m = read_manifest(manifest_path);
  Invocation inv;
  inv.subcommand = m.subcommand;
  inv.config = m.config;
  if (!out_dir.empty()) {
    // redirect outputs, keeping file names
    for (const char* key : {"out", "out_dir", "metrics"}) {
      const auto it = inv.config.find(key);
      if (it != inv.config.end()) {
        const fs::path old(it->second);
        it->second = std::string(key) == "out_dir"
                         ? out_dir
                         : (fs::path(out_dir) / old.filename()).string();
      }
    }
    fs::create_directories(out_dir);
  }
  return dispatch(inv);
}

int dispatch(const Invocation& inv) {
  if (inv.subcommand == "synthesize") return run_synthesize(inv);
  if (inv.subcommand == "train") return run_train(inv);
  if (inv.subcommand == "embedgen") return run_embedgen(inv);
  if (inv.subcommand == "serve") return run_serve(inv);
  if (inv.subcommand == "eval") return run_eval(inv);
  if (inv.subcommand == "sweep") return run_sweep(inv);
  if (inv.subcommand == "export") return run_export(inv);
  throw ConfigError("unknown subcommand '" + inv.subcommand + "'");
}

}  // namespace metarec::cli
