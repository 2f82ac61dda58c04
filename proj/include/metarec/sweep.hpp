// Hyperparameter sweep harness: one full train+evaluate per value per
// replicate with deterministically derived seeds, emitting rows shaped like
// the ablation tables (value, AUC, gain vs a matched vanilla baseline, wall
// time).
#pragma once

#include <string>
#include <vector>

#include "metarec/embedgen.hpp"
#include "metarec/eval.hpp"
#include "metarec/training.hpp"

namespace metarec {

enum class SweepParam : std::uint8_t {
  kInnerSteps,
  kDropout,
  kTaskLr,
  kGlobalLr,
  kPooling,
};

SweepParam sweep_param_from_string(const std::string& s);
std::string to_string(SweepParam p);

struct SweepSpec {
  SweepParam param = SweepParam::kInnerSteps;
  std::vector<std::string> values;
  int replicates = 1;

  void validate() const;  // >= 2 values, replicates >= 1
};

struct SweepContext {
  std::string algorithm = "limaml";  // vanilla | maml | limaml
  TrainConfig base_config;
  EvalProtocol protocol;
  EmbedGenConfig embed_config;  // used by pooling sweeps
  // architecture
  std::vector<std::size_t> meta_hidden{8};
  std::size_t embedding_dim = 4;
  std::vector<std::size_t> global_hidden{16};
  std::vector<std::size_t> plain_hidden{16};
  bool feed_meta_to_global = true;
  // train a seed-matched vanilla baseline per replicate for the gain column
  bool vanilla_baseline = true;
};

struct SweepRow {
  std::string value;
  int replicate = 0;
  std::uint64_t seed = 0;
  double auc = 0.0;
  double baseline_auc = 0.0;
  double gain_pct = 0.0;
  double gain_abs = 0.0;
  double train_wall_ms = 0.0;
  bool failed = false;
  std::string error;
};

// base_seed * 10007 + value_index * 101 + replicate
std::uint64_t sweep_seed(std::uint64_t base_seed, std::size_t value_index,
                         int replicate);

std::vector<SweepRow> run_sweep(const SweepSpec& spec,
                                const SweepContext& context,
                                const TaskCollection& train,
                                const TaskCollection& validation,
                                const TaskCollection& test);

// Delimited table (one row per run) matching the appendix layouts.
std::string sweep_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows);

}  // namespace metarec
