#include "metarec/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metarec {

std::size_t TaskCollection::sample_count() const {
  std::size_t n = 0;
  for (const auto& [key, task] : tasks) n += task.size();
  return n;
}

TaskDataset split_support_query(const TaskDataset& task,
                                double support_fraction) {
  if (!(support_fraction > 0.0 && support_fraction < 1.0)) {
    throw std::invalid_argument("split_support_query: fraction must be in (0,1)");
  }
  TaskDataset out = task;
  const std::size_t len = out.samples.size();
  if (len < 2) {
    out.support_end = len;
    out.train_eligible = false;
    return out;
  }
  auto end = static_cast<std::size_t>(
      std::floor(static_cast<double>(len) * support_fraction));
  if (end < 1) end = 1;
  if (end > len - 1) end = len - 1;
  out.support_end = end;
  out.train_eligible = true;
  return out;
}

TaskCollection split_support_query(const TaskCollection& tasks,
                                   double support_fraction) {
  TaskCollection out = tasks;
  for (auto& [key, task] : out.tasks) {
    task = split_support_query(task, support_fraction);
  }
  return out;
}

TaskDataset cap_samples(const TaskDataset& task, std::size_t cap) {
  if (cap < 1) {
    throw std::invalid_argument("cap_samples: cap must be >= 1");
  }
  if (task.samples.size() <= cap) return task;
  TaskDataset out;
  out.task_key = task.task_key;
  out.samples.assign(task.samples.end() - static_cast<std::ptrdiff_t>(cap),
                     task.samples.end());
  out.support_end = 0;
  out.train_eligible = false;
  return out;
}

TaskCollection cap_samples(const TaskCollection& tasks, std::size_t cap) {
  TaskCollection out;
  out.meta_dim = tasks.meta_dim;
  out.other_dim = tasks.other_dim;
  for (const auto& [key, task] : tasks.tasks) {
    out.tasks.emplace(key, cap_samples(task, cap));
  }
  return out;
}

CohortSlice cohort_slice(const TaskCollection& tasks, std::size_t threshold) {
  if (threshold < 1) {
    throw std::invalid_argument("cohort_slice: threshold must be >= 1");
  }
  CohortSlice out;
  out.small.meta_dim = out.large.meta_dim = tasks.meta_dim;
  out.small.other_dim = out.large.other_dim = tasks.other_dim;
  for (const auto& [key, task] : tasks.tasks) {
    if (task.size() < threshold) {
      out.small.tasks.emplace(key, task);
    } else {
      out.large.tasks.emplace(key, task);
    }
  }
  return out;
}

namespace {

Tensor feature_matrix(std::span<const Sample> samples, bool meta) {
  if (samples.empty()) return Tensor();
  const std::size_t cols =
      meta ? samples[0].meta_features.size() : samples[0].other_features.size();
  Tensor out(samples.size(), cols);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& f = meta ? samples[i].meta_features : samples[i].other_features;
    if (f.size() != cols) {
      throw std::invalid_argument("feature_matrix: inconsistent feature length");
    }
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = f[j];
  }
  return out;
}

}  // namespace

Tensor meta_matrix(std::span<const Sample> samples) {
  return feature_matrix(samples, true);
}

Tensor other_matrix(std::span<const Sample> samples) {
  return feature_matrix(samples, false);
}

std::vector<int> label_vector(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(s.label);
  return out;
}

}  // namespace metarec
