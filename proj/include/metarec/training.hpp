// The three trainers (vanilla task-grouped, entire-network MAML, LiMAML)
// plus the outer-loop machinery: adaptive-moment updates, linear LR scaling,
// warmup/decay scheduling, global-norm clipping and multi-worker data
// parallelism with outer-loop-only gradient reduction.
#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metarec/adapt.hpp"
#include "metarec/bundle.hpp"
#include "metarec/data.hpp"

namespace metarec {

enum class Decay : std::uint8_t { kNone, kCosine };

Decay decay_from_string(const std::string& s);
std::string to_string(Decay d);

struct TrainConfig {
  double alpha = 0.1;        // task (inner) learning rate
  double beta = 0.0012;      // global (outer) learning rate
  int inner_steps = 1;       // n
  int tasks_per_batch = 128;
  std::optional<double> clip_norm = 1.0;
  int warmup_steps = -1;     // -1 = 5% of total_steps
  int total_steps = 100;
  Decay decay = Decay::kCosine;
  double dropout = 0.0;
  int workers = 1;
  std::uint64_t seed = 1;
  // Alg. 2a line 13 reading: when true (default) the global-block gradient
  // is taken from the query pass that already uses the adapted meta blocks;
  // when false it comes from a separate pass with the un-adapted meta block.
  bool global_update_with_adapted_meta = true;

  int effective_warmup() const {
    return warmup_steps >= 0 ? warmup_steps : total_steps / 20;
  }
  void validate() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int step, const std::string& what)
      : std::runtime_error("training diverged at outer step " +
                           std::to_string(step) + ": " + what),
        step(step) {}
  int step;
};

// Linear warmup from 0 to beta, then cosine decay to 0.1*beta at
// total_steps (or constant beta with decay none).
double lr_schedule(int step, const TrainConfig& config);

// beta_base * tasks_per_batch / base_batch.
double scale_lr(double beta_base, int tasks_per_batch, int base_batch);

// Scales all gradients by clip_norm/norm when the joint L2 norm exceeds
// clip_norm; the boundary itself is not scaled.
ParamSet clip_gradients(const ParamSet& grads, double clip_norm);

// Adaptive-moment outer optimizer. Entries whose gradient is identically
// zero are skipped (their moments do not decay), which keeps untouched
// id-embedding rows bit-identical across steps.
class AdamState {
 public:
  explicit AdamState(const ParamSet& shapes, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8);
  void apply(ParamSet& params, const ParamSet& grads, double lr);

 private:
  ParamSet m_, v_;
  std::vector<long> entry_steps_;
  double beta1_, beta2_, eps_;
};

struct StepRecord {
  int step = 0;
  double loss = 0.0;       // sum of per-task losses in the batch
  double lr = 0.0;
  double grad_norm = 0.0;  // post-clip joint norm
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  double total_wall_ms = 0.0;
};

struct TrainResult {
  ModelBundle bundle;
  TrainReport report;
};

// Per-task outer-step work product. Gradients may cover only the entries a
// task touches (sparse id-embedding rows).
struct PerTaskGrad {
  ParamSet grads;
  double loss = 0.0;
};
using TaskStepFn = std::function<PerTaskGrad(const std::string& task_key)>;

struct OuterStep {
  ParamSet summed;  // structure of grad_shapes
  double loss_sum = 0.0;
};

// Orders the batch by task-key hash, partitions it into contiguous shards
// (one per worker), computes per-task gradients in parallel with no
// cross-worker communication, then reduces per task in the canonical hash
// order. The reduction never groups by shard, so the sum is bitwise
// identical for any worker count. A worker failure fails the whole step.
OuterStep parallel_outer_step(const std::vector<std::string>& batch,
                              int workers, const TaskStepFn& fn,
                              const ParamSet& grad_shapes);

// Without-replacement task sampler, reshuffled each epoch from the run seed.
class TaskSampler {
 public:
  TaskSampler(std::vector<std::string> keys, std::uint64_t seed);
  std::vector<std::string> next_batch(std::size_t n);

 private:
  void reshuffle();
  std::vector<std::string> keys_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
};

// Standard training over mini-batches of tasks; each task contributes the
// mean cross-entropy over all of its samples.
TrainResult vanilla_train(const TaskCollection& tasks, const MlpSpec& spec,
                          const TrainConfig& config);

// Entire-network MAML (inner adaptation on support, exact second-order
// meta-gradient on query).
TrainResult maml_train(const TaskCollection& tasks, const MlpSpec& spec,
                       const TrainConfig& config);

// LiMAML: inner loop adapts only the meta block; the outer step updates the
// meta block through the adapted copies and the global block from the same
// query losses.
TrainResult limaml_train(const TaskCollection& tasks,
                         const ModelBundle& bundle, const TrainConfig& config);

// One task's contribution to a LiMAML outer step: adapt the meta view on
// the support set with the global block frozen, then differentiate the
// query loss ("meta/..." second-order, "global/..." first-order).
PerTaskGrad limaml_task_grad(const ModelBundle& bundle, const TaskDataset& task,
                             const TrainConfig& config, int step);

// Task batch features for a plain (single-network) model.
Batch task_batch(std::span<const Sample> samples);

}  // namespace metarec
