// Offline evaluation: rank-sum AUC, the fine-tune vs no-fine-tune protocol
// and cohort-sliced reports with gains against a named baseline.
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metarec/bundle.hpp"
#include "metarec/data.hpp"
#include "metarec/store.hpp"

namespace metarec {

// Probability a random positive outranks a random negative, ties counting
// 1/2 (rank-sum with tie correction). Undefined when only one class is
// present.
struct AucResult {
  double value = 0.5;
  bool defined = false;
};
AucResult auc(std::span<const double> scores, std::span<const int> labels);

enum class EvalMode : std::uint8_t { kNoFineTune, kFineTune };

struct EvalProtocol {
  EvalMode mode = EvalMode::kNoFineTune;
  int fine_tune_steps = 5;       // k
  double fine_tune_alpha = 0.1;  // task learning rate for adaptation
  std::size_t cohort_threshold = 25;
};

struct CohortStat {
  std::string name;
  AucResult auc;
  std::size_t task_count = 0;
  std::size_t sample_count = 0;
};

struct EvalReport {
  AucResult overall;
  std::vector<CohortStat> cohorts;  // small, large
  std::size_t task_count = 0;
  std::size_t adapted_task_count = 0;
  std::size_t unadapted_task_count = 0;  // fine-tune mode, no validation data
  std::size_t single_class_tasks = 0;    // excluded from per-task stats
  std::uint64_t seed = 0;
  // per-sample scores pooled over tasks in key order (parity checks)
  std::vector<double> scores;
  std::vector<int> labels;
};

// Relative gain in percent plus the absolute delta; the paper-style number
// is the relative one.
struct AucGain {
  double relative_pct = 0.0;
  double absolute = 0.0;
};
AucGain auc_gain(double value, double baseline);

// Scores every test sample with the bundle. In fine-tune mode each task
// bootstraps from the trained parameters, adapts on its validation samples
// (LiMAML bundles adapt only the meta block, via the same code path the
// embedding generation flow uses) and scores its own test samples. Tasks
// without validation data are scored unadapted and counted separately.
// The trained bundle is never mutated.
EvalReport evaluate(const ModelBundle& bundle, const EvalProtocol& protocol,
                    const TaskCollection& validation,
                    const TaskCollection& test);

// Serving-parity path: scores test samples through the stored-embedding
// route (snapshot lookup + global block), the exact computation the online
// scorer performs.
EvalReport evaluate_with_snapshot(const ModelBundle& bundle,
                                  const EmbeddingSnapshot& snapshot,
                                  const TaskCollection& test);

}  // namespace metarec
