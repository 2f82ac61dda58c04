#include "metarec/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "metarec/util.hpp"

namespace metarec {

Decay decay_from_string(const std::string& s) {
  if (s == "none") return Decay::kNone;
  if (s == "cosine") return Decay::kCosine;
  throw std::invalid_argument("unknown decay '" + s + "'");
}

std::string to_string(Decay d) {
  return d == Decay::kCosine ? "cosine" : "none";
}

void TrainConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw std::invalid_argument("TrainConfig: alpha and beta must be > 0");
  }
  if (inner_steps < 0) {
    throw std::invalid_argument("TrainConfig: inner_steps must be >= 0");
  }
  if (tasks_per_batch < 1) {
    throw std::invalid_argument("TrainConfig: tasks_per_batch must be >= 1");
  }
  if (clip_norm && !(*clip_norm > 0.0)) {
    throw std::invalid_argument("TrainConfig: clip_norm must be > 0");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("TrainConfig: dropout must be in [0,1)");
  }
  if (workers < 1) {
    throw std::invalid_argument("TrainConfig: workers must be >= 1");
  }
  if (total_steps < 1) {
    throw std::invalid_argument("TrainConfig: total_steps must be >= 1");
  }
  if (effective_warmup() >= total_steps) {
    throw std::invalid_argument(
        "TrainConfig: warmup_steps must be below total_steps");
  }
}

double lr_schedule(int step, const TrainConfig& config) {
  if (step < 0 || step >= config.total_steps) {
    throw std::invalid_argument("lr_schedule: step out of range");
  }
  const int warmup = config.effective_warmup();
  if (step < warmup) {
    return config.beta * static_cast<double>(step) /
           static_cast<double>(warmup);
  }
  if (config.decay == Decay::kNone) return config.beta;
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(config.total_steps - warmup);
  const double kPi = 3.14159265358979323846;
  return config.beta * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(kPi * progress)));
}

double scale_lr(double beta_base, int tasks_per_batch, int base_batch) {
  if (!(beta_base > 0.0) || tasks_per_batch < 1 || base_batch < 1) {
    throw std::invalid_argument("scale_lr: inputs must be positive");
  }
  return beta_base * static_cast<double>(tasks_per_batch) /
         static_cast<double>(base_batch);
}

ParamSet clip_gradients(const ParamSet& grads, double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw std::invalid_argument("clip_gradients: clip_norm must be > 0");
  }
  if (!grads.all_finite()) {
    throw std::invalid_argument("clip_gradients: non-finite gradient");
  }
  const double norm = grads.global_norm();
  if (norm <= clip_norm) return grads;
  return scale(grads, clip_norm / norm);
}

AdamState::AdamState(const ParamSet& shapes, double beta1, double beta2,
                     double eps)
    : m_(zeros_like(shapes)),
      v_(zeros_like(shapes)),
      entry_steps_(shapes.size(), 0),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void AdamState::apply(ParamSet& params, const ParamSet& grads, double lr) {
  if (!params.same_structure(grads) || !params.same_structure(m_)) {
    throw std::invalid_argument("AdamState: structure mismatch");
  }
  for (std::size_t e = 0; e < params.size(); ++e) {
    const Tensor& g = grads.entry(e).second;
    bool all_zero = true;
    for (double x : g.values()) {
      if (x != 0.0) {
        all_zero = false;
        break;
      }
    }
    if (all_zero) continue;
    Tensor& m = m_.entry(e).second;
    Tensor& v = v_.entry(e).second;
    Tensor& p = params.entry(e).second;
    const long t = ++entry_steps_[e];
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

OuterStep parallel_outer_step(const std::vector<std::string>& batch,
                              int workers, const TaskStepFn& fn,
                              const ParamSet& grad_shapes) {
  if (workers < 1) {
    throw std::invalid_argument("parallel_outer_step: workers must be >= 1");
  }
  // Canonical order: task-key hash, key as tie-break.
  std::vector<std::string> ordered = batch;
  std::sort(ordered.begin(), ordered.end(),
            [](const std::string& a, const std::string& b) {
              const auto ha = fnv1a(a), hb = fnv1a(b);
              return ha != hb ? ha < hb : a < b;
            });

  const std::size_t n = ordered.size();
  std::vector<PerTaskGrad> slots(n);
  const auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) slots[i] = fn(ordered[i]);
  };

  if (workers == 1 || n <= 1) {
    run_range(0, n);
  } else {
    const auto w = static_cast<std::size_t>(workers);
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(w);
    for (std::size_t s = 0; s < w; ++s) {
      const std::size_t begin = n * s / w;
      const std::size_t end = n * (s + 1) / w;
      threads.emplace_back([&, s, begin, end] {
        try {
          run_range(begin, end);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      });
    }
    for (std::thread& t : threads) t.join();
    for (const std::exception_ptr& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  // Per-task reduction in canonical order; grouping never depends on the
  // worker count, so sums are bitwise reproducible.
  OuterStep out;
  out.summed = zeros_like(grad_shapes);
  for (std::size_t i = 0; i < n; ++i) {
    out.loss_sum += slots[i].loss;
    for (const auto& [name, g] : slots[i].grads) {
      Tensor& acc = out.summed.at(name);
      for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j];
    }
  }
  return out;
}

TaskSampler::TaskSampler(std::vector<std::string> keys, std::uint64_t seed)
    : keys_(std::move(keys)), seed_(seed) {
  if (keys_.empty()) {
    throw std::invalid_argument("TaskSampler: no tasks to sample");
  }
  std::sort(keys_.begin(), keys_.end());
  reshuffle();
}

void TaskSampler::reshuffle() {
  Rng rng(mix_seed(seed_, "epoch", epoch_));
  for (std::size_t i = keys_.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(keys_[i - 1], keys_[j]);
  }
  cursor_ = 0;
}

std::vector<std::string> TaskSampler::next_batch(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  while (out.size() < n) {
    if (cursor_ >= keys_.size()) {
      ++epoch_;
      reshuffle();
    }
    out.push_back(keys_[cursor_++]);
  }
  return out;
}

Batch task_batch(std::span<const Sample> samples) {
  Batch b;
  const Tensor meta = meta_matrix(samples);
  const Tensor other = other_matrix(samples);
  b.features = concat_cols({meta, other});
  b.labels = label_vector(samples);
  return b;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start)
      .count();
}

// Shared outer loop: sampling, parallel per-task work, clipping, scheduled
// adaptive-moment updates, divergence checks and the step trace.
TrainResult run_outer_loop(const std::vector<std::string>& eligible,
                           ModelBundle bundle, const TrainConfig& config,
                           const std::function<PerTaskGrad(
                               const std::string&, const ModelBundle&, int)>& task_fn) {
  if (eligible.empty()) {
    throw std::invalid_argument("training: no eligible tasks");
  }
  const auto train_start = Clock::now();
  TaskSampler sampler(eligible, mix_seed(config.seed, "sampler"));
  const ParamSet shapes = combined_params(bundle);
  AdamState adam(shapes);
  TrainResult result;
  result.bundle = std::move(bundle);

  for (int step = 0; step < config.total_steps; ++step) {
    const auto step_start = Clock::now();
    const std::vector<std::string> batch = sampler.next_batch(
        std::min<std::size_t>(static_cast<std::size_t>(config.tasks_per_batch),
                              eligible.size()));
    const ModelBundle& current = result.bundle;
    OuterStep outer;
    try {
      outer = parallel_outer_step(
          batch, config.workers,
          [&](const std::string& key) { return task_fn(key, current, step); },
          shapes);
    } catch (const TrainingDiverged&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw TrainingDiverged(step, e.what());
    }
    if (!std::isfinite(outer.loss_sum)) {
      throw TrainingDiverged(step, "non-finite batch loss");
    }
    if (!outer.summed.all_finite()) {
      throw TrainingDiverged(step, "non-finite outer gradient");
    }
    ParamSet grads = config.clip_norm
                         ? clip_gradients(outer.summed, *config.clip_norm)
                         : outer.summed;
    const double lr = lr_schedule(step, config);
    ParamSet params = combined_params(result.bundle);
    adam.apply(params, grads, lr);
    assign_combined(result.bundle, params);

    StepRecord rec;
    rec.step = step;
    rec.loss = outer.loss_sum;
    rec.lr = lr;
    rec.grad_norm = grads.global_norm();
    rec.wall_ms = ms_since(step_start);
    result.report.steps.push_back(rec);
  }
  result.report.total_wall_ms = ms_since(train_start);
  return result;
}

ParamSet prefixed(const ParamSet& grads, const char* prefix) {
  ParamSet out;
  for (const auto& [name, t] : grads) out.insert(prefix + name, t);
  return out;
}

std::vector<std::string> keys_with(const TaskCollection& tasks,
                                   bool (*pred)(const TaskDataset&)) {
  std::vector<std::string> out;
  for (const auto& [key, task] : tasks.tasks) {
    if (pred(task)) out.push_back(key);
  }
  return out;
}

}  // namespace

TrainResult vanilla_train(const TaskCollection& tasks, const MlpSpec& spec,
                          const TrainConfig& config) {
  config.validate();
  const MlpSpec train_spec =
      config.dropout > 0.0 ? spec.with_dropout(config.dropout) : spec;
  ModelBundle bundle;
  bundle.meta_dim = tasks.meta_dim;
  bundle.other_dim = tasks.other_dim;
  bundle.meta_arch.kind = MetaBlockKind::kNone;
  bundle.global_spec = spec;
  bundle.theta_global = init_mlp_params(spec, mix_seed(config.seed, "init"));
  bundle.validate();

  const std::vector<std::string> eligible = keys_with(
      tasks, [](const TaskDataset& t) { return t.size() >= 1; });

  auto task_fn = [&tasks, &train_spec, &config](
                     const std::string& key, const ModelBundle& current,
                     int step) {
    const TaskDataset& task = tasks.tasks.at(key);
    const Batch batch = task_batch(task.samples);
    const ParamVars params = ParamVars::leaves(current.theta_global);
    Rng drop_rng(mix_seed(config.seed, "dropout:" + key,
                          static_cast<std::uint64_t>(step)));
    Rng* rng = config.dropout > 0.0 ? &drop_rng : nullptr;
    const Mode mode = config.dropout > 0.0 ? Mode::kTrain : Mode::kEval;
    const Var loss = mlp_batch_loss(train_spec, batch, mode, rng)(params);
    PerTaskGrad out;
    out.loss = loss.value()[0];
    out.grads = prefixed(grad(loss, params).values(), "global/");
    return out;
  };
  return run_outer_loop(eligible, std::move(bundle), config, task_fn);
}

TrainResult maml_train(const TaskCollection& tasks, const MlpSpec& spec,
                       const TrainConfig& config) {
  config.validate();
  const MlpSpec train_spec =
      config.dropout > 0.0 ? spec.with_dropout(config.dropout) : spec;
  ModelBundle bundle;
  bundle.meta_dim = tasks.meta_dim;
  bundle.other_dim = tasks.other_dim;
  bundle.meta_arch.kind = MetaBlockKind::kNone;
  bundle.global_spec = spec;
  bundle.theta_global = init_mlp_params(spec, mix_seed(config.seed, "init"));
  bundle.validate();

  // Tasks must have both a support and a query set; with n=0 the support
  // set is unused, so any task with at least one (query) sample trains.
  const std::vector<std::string> eligible =
      config.inner_steps > 0
          ? keys_with(tasks,
                      [](const TaskDataset& t) {
                        return t.train_eligible && t.support_end > 0 &&
                               t.support_end < t.size();
                      })
          : keys_with(tasks, [](const TaskDataset& t) {
              return t.size() > t.support_end;
            });

  auto task_fn = [&tasks, &train_spec, &config](
                     const std::string& key, const ModelBundle& current,
                     int step) {
    const TaskDataset& task = tasks.tasks.at(key);
    const Batch support = task_batch(task.support());
    const Batch query = task_batch(task.query());
    const ParamVars params = ParamVars::leaves(current.theta_global);
    Rng drop_rng(mix_seed(config.seed, "dropout:" + key,
                          static_cast<std::uint64_t>(step)));
    Rng* rng = config.dropout > 0.0 ? &drop_rng : nullptr;
    const Mode mode = config.dropout > 0.0 ? Mode::kTrain : Mode::kEval;
    const MetaGradient mg = meta_gradient(
        params, mlp_batch_loss(train_spec, support, mode, rng),
        mlp_batch_loss(train_spec, query, mode, rng), config.alpha,
        config.inner_steps);
    PerTaskGrad out;
    out.loss = mg.query_loss;
    out.grads = prefixed(mg.grads, "global/");
    return out;
  };
  return run_outer_loop(eligible, std::move(bundle), config, task_fn);
}

TrainResult limaml_train(const TaskCollection& tasks,
                         const ModelBundle& bundle0,
                         const TrainConfig& config) {
  config.validate();
  if (bundle0.meta_arch.kind == MetaBlockKind::kNone) {
    throw std::invalid_argument("limaml_train: bundle has no meta block");
  }
  ModelBundle bundle = bundle0;
  bundle.validate();
  if (bundle.meta_dim != tasks.meta_dim ||
      bundle.other_dim != tasks.other_dim) {
    throw std::invalid_argument(
        "limaml_train: bundle wiring does not match the data feature dims");
  }
  ModelBundle train_bundle = bundle;
  if (config.dropout > 0.0) {
    train_bundle.global_spec = bundle.global_spec.with_dropout(config.dropout);
    if (train_bundle.meta_arch.kind == MetaBlockKind::kMlp) {
      train_bundle.meta_arch.mlp =
          bundle.meta_arch.mlp.with_dropout(config.dropout);
    }
  }

  const std::vector<std::string> eligible =
      config.inner_steps > 0
          ? keys_with(tasks,
                      [](const TaskDataset& t) {
                        return t.train_eligible && t.support_end > 0 &&
                               t.support_end < t.size();
                      })
          : keys_with(tasks, [](const TaskDataset& t) {
              return t.size() > t.support_end;
            });

  auto task_fn = [&tasks, &train_bundle, &config](
                     const std::string& key, const ModelBundle& current,
                     int step) {
    // Arch comes from the (possibly dropout-decorated) training view;
    // parameter values come from the current bundle.
    ModelBundle arch = train_bundle;
    arch.theta_meta = current.theta_meta;
    arch.theta_global = current.theta_global;
    return limaml_task_grad(arch, tasks.tasks.at(key), config, step);
  };
  return run_outer_loop(eligible, std::move(bundle), config, task_fn);
}

PerTaskGrad limaml_task_grad(const ModelBundle& bundle, const TaskDataset& task,
                             const TrainConfig& config, int step) {
  const std::string& key = task.task_key;
  const Tensor support_meta = meta_matrix(task.support());
  const Tensor support_other = other_matrix(task.support());
  const std::vector<int> support_labels = label_vector(task.support());
  const Tensor query_meta = meta_matrix(task.query());
  const Tensor query_other = other_matrix(task.query());
  const std::vector<int> query_labels = label_vector(task.query());

  Rng drop_rng(mix_seed(config.seed, "dropout:" + key,
                        static_cast<std::uint64_t>(step)));
  Rng* rng = config.dropout > 0.0 ? &drop_rng : nullptr;
  const Mode mode = config.dropout > 0.0 ? Mode::kTrain : Mode::kEval;

  // Trainable meta view: the MLP parameters, or just this task's row.
  ParamVars meta_leaves;
  if (bundle.meta_arch.kind == MetaBlockKind::kMlp) {
    meta_leaves = ParamVars::leaves(bundle.theta_meta);
  } else {
    const std::string row = id_row_name(key);
    ParamSet rows;
    rows.insert(row, bundle.theta_meta.contains(row)
                         ? bundle.theta_meta.at(row)
                         : Tensor(1, bundle.meta_arch.embedding_dim, 0.0));
    meta_leaves = ParamVars::leaves(rows);
  }
  // The inner loop sees the global block as a constant, so adapted meta
  // parameters carry no theta_global dependence and the later global
  // gradient stays first-order.
  const ParamVars global_const = ParamVars::constants(bundle.theta_global);
  const LossFn support_loss = [&](const ParamVars& meta_p) {
    const Var probs = bundle_forward(bundle, meta_p, global_const, key,
                                     support_meta, support_other, mode, rng);
    return bce_mean(probs, support_labels);
  };
  const AdaptResult adapted =
      unrolled_adapt(meta_leaves, support_loss, config.alpha,
                     config.inner_steps);

  const ParamVars global_leaves = ParamVars::leaves(bundle.theta_global);
  const Var query_probs =
      bundle_forward(bundle, adapted.adapted, global_leaves, key, query_meta,
                     query_other, mode, rng);
  const Var query_loss = bce_mean(query_probs, query_labels);

  PerTaskGrad out;
  out.loss = query_loss.value()[0];
  const ParamSet meta_grads = grad(query_loss, meta_leaves).values();
  ParamSet global_grads;
  if (config.global_update_with_adapted_meta) {
    global_grads = grad(query_loss, global_leaves).values();
  } else {
    // Alternative reading: the global update's forward pass uses the
    // un-adapted meta block.
    const Var alt_probs =
        bundle_forward(bundle, ParamVars::constants(bundle.theta_meta),
                       global_leaves, key, query_meta, query_other, mode, rng);
    const Var alt_loss = bce_mean(alt_probs, query_labels);
    global_grads = grad(alt_loss, global_leaves).values();
  }
  out.grads = prefixed(meta_grads, "meta/");
  for (const auto& [name, g] : prefixed(global_grads, "global/")) {
    out.grads.insert(name, g);
  }
  return out;
}

}  // namespace metarec
