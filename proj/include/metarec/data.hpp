// Sample/task data model, chronological support/query splitting, per-task
// caps and cohort slicing.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metarec/tensor.hpp"

namespace metarec {

struct Sample {
  std::string task_key;
  std::int64_t timestamp = 0;  // epoch seconds
  int label = 0;
  std::vector<double> meta_features;
  std::vector<double> other_features;

  bool operator==(const Sample&) const = default;
};

// All samples of one task, ascending by timestamp. support = [0,
// support_end), query = the rest.
struct TaskDataset {
  std::string task_key;
  std::vector<Sample> samples;
  std::size_t support_end = 0;
  // False until split_support_query produces a non-empty query set; tasks
  // with fewer than 2 samples stay ineligible and are only scored without
  // fine-tuning.
  bool train_eligible = false;

  std::size_t size() const { return samples.size(); }
  std::span<const Sample> support() const {
    return {samples.data(), support_end};
  }
  std::span<const Sample> query() const {
    return {samples.data() + support_end, samples.size() - support_end};
  }

  bool operator==(const TaskDataset&) const = default;
};

struct TaskCollection {
  std::map<std::string, TaskDataset> tasks;
  std::size_t meta_dim = 0;
  std::size_t other_dim = 0;

  std::size_t task_count() const { return tasks.size(); }
  std::size_t sample_count() const;

  bool operator==(const TaskCollection&) const = default;
};

// Chronological split: support_end = floor(len * fraction), clamped so both
// sets are non-empty whenever len >= 2.
TaskDataset split_support_query(const TaskDataset& task,
                                double support_fraction = 0.75);
TaskCollection split_support_query(const TaskCollection& tasks,
                                   double support_fraction = 0.75);

// Keeps the `cap` most recent samples.
TaskDataset cap_samples(const TaskDataset& task, std::size_t cap);
TaskCollection cap_samples(const TaskCollection& tasks, std::size_t cap);

// Partition by sample count; tasks with exactly `threshold` samples go to
// the large cohort.
struct CohortSlice {
  TaskCollection small;
  TaskCollection large;
};
CohortSlice cohort_slice(const TaskCollection& tasks,
                         std::size_t threshold = 25);

// Feature matrices for a span of samples (used to form task batches).
Tensor meta_matrix(std::span<const Sample> samples);
Tensor other_matrix(std::span<const Sample> samples);
std::vector<int> label_vector(std::span<const Sample> samples);

}  // namespace metarec
