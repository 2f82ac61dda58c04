#include "metarec/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "metarec/embedgen.hpp"
#include "metarec/serving.hpp"
#include "metarec/training.hpp"

namespace metarec {

AucResult auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: scores/labels length mismatch");
  }
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw std::invalid_argument("auc: labels must be 0 or 1");
    }
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) return {0.5, false};

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average ranks within tie groups; ranks are 1-based. All quantities are
  // integers or halves, so the sums below are exact.
  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) +
                                   static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return {(positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn), true};
}

AucGain auc_gain(double value, double baseline) {
  AucGain g;
  g.absolute = value - baseline;
  g.relative_pct = baseline != 0.0 ? (value - baseline) / baseline * 100.0 : 0.0;
  return g;
}

namespace {

struct TaskScores {
  std::vector<double> scores;
  std::vector<int> labels;
};

EvalReport assemble_report(const std::map<std::string, TaskScores>& per_task,
                           const TaskCollection& test,
                           std::size_t cohort_threshold) {
  EvalReport report;
  const CohortSlice cohorts = cohort_slice(test, cohort_threshold);
  std::vector<double> small_scores, large_scores;
  std::vector<int> small_labels, large_labels;
  for (const auto& [key, ts] : per_task) {
    const bool is_small = cohorts.small.tasks.contains(key);
    for (std::size_t i = 0; i < ts.scores.size(); ++i) {
      report.scores.push_back(ts.scores[i]);
      report.labels.push_back(ts.labels[i]);
      (is_small ? small_scores : large_scores).push_back(ts.scores[i]);
      (is_small ? small_labels : large_labels).push_back(ts.labels[i]);
    }
    bool has_pos = false, has_neg = false;
    for (int y : ts.labels) (y == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) ++report.single_class_tasks;
  }
  report.task_count = per_task.size();
  report.overall = auc(report.scores, report.labels);
  CohortStat small_stat{"small", auc(small_scores, small_labels),
                        cohorts.small.task_count(), small_scores.size()};
  CohortStat large_stat{"large", auc(large_scores, large_labels),
                        cohorts.large.task_count(), large_scores.size()};
  report.cohorts = {small_stat, large_stat};
  return report;
}

}  // namespace

EvalReport evaluate(const ModelBundle& bundle, const EvalProtocol& protocol,
                    const TaskCollection& validation,
                    const TaskCollection& test) {
  bundle.validate();
  std::map<std::string, TaskScores> per_task;
  std::size_t adapted = 0, unadapted = 0;
  for (const auto& [key, task] : test.tasks) {
    if (task.samples.empty()) continue;
    TaskScores ts;
    ts.labels = label_vector(task.samples);
    const Tensor meta_X = meta_matrix(task.samples);
    const Tensor other_X = other_matrix(task.samples);

    Tensor probs;
    const auto val_it = validation.tasks.find(key);
    const bool can_adapt = protocol.mode == EvalMode::kFineTune &&
                           val_it != validation.tasks.end() &&
                           !val_it->second.samples.empty();
    if (can_adapt) {
      ++adapted;
      if (bundle.meta_arch.kind == MetaBlockKind::kNone) {
        // whole-network adaptation (vanilla / entire-network MAML)
        const Batch batch = task_batch(val_it->second.samples);
        const AdaptResult r = unrolled_adapt_mlp(
            bundle.global_spec, ParamVars::leaves(bundle.theta_global), batch,
            protocol.fine_tune_alpha, protocol.fine_tune_steps);
        ModelBundle tuned = bundle;
        tuned.theta_global = r.adapted.values();
        probs = bundle_eval(tuned, tuned.theta_meta, key, meta_X, other_X);
      } else {
        // only the meta block adapts; same path as embedding generation
        const ParamSet adapted_meta = adapt_meta_for_task(
            bundle, val_it->second.samples, protocol.fine_tune_steps,
            protocol.fine_tune_alpha);
        const Tensor emb =
            meta_block_eval_adapted(bundle, adapted_meta, key, meta_X);
        probs = global_eval_with_embedding(bundle, emb, meta_X, other_X);
      }
    } else {
      if (protocol.mode == EvalMode::kFineTune) ++unadapted;
      probs = bundle_eval(bundle, bundle.theta_meta, key, meta_X, other_X);
    }
    ts.scores.resize(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) ts.scores[i] = probs.at(i, 0);
    per_task.emplace(key, std::move(ts));
  }
  EvalReport report =
      assemble_report(per_task, test, protocol.cohort_threshold);
  report.adapted_task_count = adapted;
  report.unadapted_task_count = unadapted;
  return report;
}

EvalReport evaluate_with_snapshot(const ModelBundle& bundle,
                                  const EmbeddingSnapshot& snapshot,
                                  const TaskCollection& test) {
  const Scorer scorer(bundle, snapshot, Fallback::kZero);
  std::map<std::string, TaskScores> per_task;
  for (const auto& [key, task] : test.tasks) {
    if (task.samples.empty()) continue;
    TaskScores ts;
    ts.labels = label_vector(task.samples);
    ts.scores.reserve(task.samples.size());
    for (const Sample& s : task.samples) {
      ScoreRequest req{key, s.meta_features, s.other_features};
      ts.scores.push_back(scorer.score(req).score);
    }
    per_task.emplace(key, std::move(ts));
  }
  return assemble_report(per_task, test, 25);
}

}  // namespace metarec
