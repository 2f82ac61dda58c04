// Heterogeneous synthetic task generator. Each task draws a latent logistic
// parameter vector (plus bias) over its meta features; labels are Bernoulli
// of the resulting logit. Train, validation and test collections are
// disjoint in time per task, with the latent state optionally drifting
// across the shared timeline.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metarec/data.hpp"

namespace metarec {

struct SyntheticSpec {
  std::size_t num_tasks = 100;
  std::size_t samples_min = 8;   // per collection
  std::size_t samples_max = 64;  // per collection
  double latent_scale = 1.0;
  std::size_t meta_dim = 4;
  std::size_t other_dim = 4;
  // How far the latent state moves over the full timeline, in units of
  // latent_scale.
  double drift_rate = 0.0;
  std::uint64_t seed = 1;

  // How strongly meta features are centered on the current latent state
  // (0 = pure noise inputs; positive values make meta features carry a
  // snapshot of the task's state, which is what makes stale embeddings
  // hurt under drift).
  double profile_coupling = 0.0;

  // Timeline layout; the test window ends at end_epoch.
  std::int64_t end_epoch = 1767225600;  // 2026-01-01T00:00:00Z
  int train_days = 60;
  int validation_days = 15;
  int test_days = 15;

  void validate() const;
};

struct TaskTruth {
  std::vector<double> latent;  // per meta feature
  double bias = 0.0;
  // Bayes probability for each sample, aligned with sample order.
  std::vector<double> train_probs;
  std::vector<double> validation_probs;
  std::vector<double> test_probs;
};

struct SyntheticData {
  TaskCollection train;
  TaskCollection validation;
  TaskCollection test;
  std::map<std::string, TaskTruth> truth;
};

SyntheticData synthesize_detailed(const SyntheticSpec& spec);

struct SyntheticSplits {
  TaskCollection train;
  TaskCollection validation;
  TaskCollection test;
};

SyntheticSplits synthesize(const SyntheticSpec& spec);

}  // namespace metarec
