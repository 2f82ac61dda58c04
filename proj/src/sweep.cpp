#include "metarec/sweep.hpp"

#include <cstdio>
#include <stdexcept>

#include "metarec/util.hpp"

namespace metarec {

SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "inner_steps") return SweepParam::kInnerSteps;
  if (s == "dropout") return SweepParam::kDropout;
  if (s == "task_lr") return SweepParam::kTaskLr;
  if (s == "global_lr") return SweepParam::kGlobalLr;
  if (s == "pooling") return SweepParam::kPooling;
  throw std::invalid_argument("unknown sweep parameter '" + s + "'");
}

std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::kInnerSteps: return "inner_steps";
    case SweepParam::kDropout: return "dropout";
    case SweepParam::kTaskLr: return "task_lr";
    case SweepParam::kGlobalLr: return "global_lr";
    case SweepParam::kPooling: return "pooling";
  }
  return "inner_steps";
}

void SweepSpec::validate() const {
  if (values.size() < 2) {
    throw std::invalid_argument("SweepSpec: need at least 2 values");
  }
  if (replicates < 1) {
    throw std::invalid_argument("SweepSpec: replicates must be >= 1");
  }
}

std::uint64_t sweep_seed(std::uint64_t base_seed, std::size_t value_index,
                         int replicate) {
  return base_seed * 10007 + static_cast<std::uint64_t>(value_index) * 101 +
         static_cast<std::uint64_t>(replicate);
}

namespace {

TrainConfig apply_value(const SweepSpec& spec, const TrainConfig& base,
                        const std::string& value) {
  TrainConfig config = base;
  switch (spec.param) {
    case SweepParam::kInnerSteps:
      config.inner_steps = std::stoi(value);
      break;
    case SweepParam::kDropout:
      config.dropout = std::stod(value);
      break;
    case SweepParam::kTaskLr:
      config.alpha = std::stod(value);
      break;
    case SweepParam::kGlobalLr:
      config.beta = std::stod(value);
      break;
    case SweepParam::kPooling:
      break;  // applies to embedding generation, not training
  }
  return config;
}

}  // namespace

std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                const SweepContext& context,
                                const TaskCollection& train,
                                const TaskCollection& validation,
                                const TaskCollection& test) {
  spec.validate();

  // One vanilla baseline per replicate, shared across values; the gain
  // column is relative to its no-fine-tune AUC.
  std::vector<double> baselines(static_cast<std::size_t>(spec.replicates), 0.5);
  if (context.vanilla_baseline) {
    for (int rep = 0; rep < spec.replicates; ++rep) {
      TrainConfig config = context.base_config;
      config.seed = mix_seed(context.base_config.seed, "sweep-baseline",
                             static_cast<std::uint64_t>(rep));
      const MlpSpec plain = classifier_spec(train.meta_dim + train.other_dim,
                                            context.plain_hidden);
      const TrainResult r = vanilla_train(train, plain, config);
      EvalProtocol no_ft = context.protocol;
      no_ft.mode = EvalMode::kNoFineTune;
      baselines[static_cast<std::size_t>(rep)] =
          evaluate(r.bundle, no_ft, validation, test).overall.value;
    }
  }

  std::vector<SweepRow> rows;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi) {
    for (int rep = 0; rep < spec.replicates; ++rep) {
      SweepRow row;
      row.value = spec.values[vi];
      row.replicate = rep;
      row.seed = sweep_seed(context.base_config.seed, vi, rep);
      row.baseline_auc = baselines[static_cast<std::size_t>(rep)];
      try {
        TrainConfig config =
            apply_value(spec, context.base_config, spec.values[vi]);
        config.seed = row.seed;

        TrainResult result;
        if (context.algorithm == "limaml") {
          const ModelBundle bundle = make_mlp_bundle(
              train.meta_dim, train.other_dim, context.meta_hidden,
              context.embedding_dim, context.global_hidden,
              context.feed_meta_to_global, config.seed);
          result = limaml_train(train, bundle, config);
        } else {
          const MlpSpec plain = classifier_spec(
              train.meta_dim + train.other_dim, context.plain_hidden);
          result = context.algorithm == "maml"
                       ? maml_train(train, plain, config)
                       : vanilla_train(train, plain, config);
        }
        row.train_wall_ms = result.report.total_wall_ms;

        if (spec.param == SweepParam::kPooling) {
          EmbedGenConfig eg = context.embed_config;
          eg.pooling = pooling_from_string(spec.values[vi]);
          const EmbedGenResult gen =
              generate_embeddings(validation, result.bundle, eg,
                                  context.base_config.workers);
          const EmbeddingSnapshot snap = make_snapshot(
              gen.embeddings, eg.version, result.bundle.embedding_dim());
          row.auc = evaluate_with_snapshot(result.bundle, snap, test)
                        .overall.value;
        } else {
          row.auc =
              evaluate(result.bundle, context.protocol, validation, test)
                  .overall.value;
        }
        const AucGain gain = auc_gain(row.auc, row.baseline_auc);
        row.gain_pct = gain.relative_pct;
        row.gain_abs = gain.absolute;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv(const SweepSpec& spec,
                      const std::vector<SweepRow>& rows) {
  std::string out = "param,value,replicate,seed,auc,baseline_auc,gain_pct,"
                    "gain_abs,train_wall_ms,failed,error\n";
  char buf[64];
  for (const SweepRow& r : rows) {
    out += to_string(spec.param);
    out += ',' + r.value + ',' + std::to_string(r.replicate) + ',' +
           std::to_string(r.seed) + ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r.auc);
    out += buf;
    out += ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r.baseline_auc);
    out += buf;
    out += ',';
    std::snprintf(buf, sizeof(buf), "%.4f", r.gain_pct);
    out += buf;
    out += ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r.gain_abs);
    out += buf;
    out += ',';
    std::snprintf(buf, sizeof(buf), "%.3f", r.train_wall_ms);
    out += buf;
    out += ',';
    out += r.failed ? "1" : "0";
    out += ',';
    out += r.error;
    out += '\n';
  }
  return out;
}

}  // namespace metarec
