#include "metarec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "metarec/tensor.hpp"
#include "metarec/util.hpp"

namespace metarec {

void SyntheticSpec::validate() const {
  if (num_tasks < 1) {
    throw std::invalid_argument("SyntheticSpec: num_tasks must be >= 1");
  }
  if (samples_min < 1 || samples_max < samples_min) {
    throw std::invalid_argument(
        "SyntheticSpec: need samples_max >= samples_min >= 1");
  }
  if (meta_dim < 1 || other_dim < 1) {
    throw std::invalid_argument("SyntheticSpec: feature dims must be >= 1");
  }
  if (latent_scale < 0.0 || drift_rate < 0.0 || profile_coupling < 0.0) {
    throw std::invalid_argument("SyntheticSpec: scales must be non-negative");
  }
  if (train_days < 1 || validation_days < 1 || test_days < 1) {
    throw std::invalid_argument("SyntheticSpec: day spans must be >= 1");
  }
}

namespace {

constexpr std::int64_t kDaySeconds = 86400;

std::string task_key_for(std::size_t index) {
  std::string idx = std::to_string(index);
  if (idx.size() < 6) idx.insert(0, 6 - idx.size(), '0');
  return "t" + idx;
}

}  // namespace

SyntheticData synthesize_detailed(const SyntheticSpec& spec) {
  spec.validate();

  const std::int64_t total_days =
      spec.train_days + spec.validation_days + spec.test_days;
  const std::int64_t t0 = spec.end_epoch - total_days * kDaySeconds;
  const std::int64_t t_val = t0 + spec.train_days * kDaySeconds;
  const std::int64_t t_test = t_val + spec.validation_days * kDaySeconds;
  const double span = static_cast<double>(spec.end_epoch - t0);

  // Shared weights on other features, common to all tasks.
  Rng global_rng(mix_seed(spec.seed, "global"));
  std::vector<double> w_global(spec.other_dim);
  for (double& w : w_global) w = global_rng.normal();

  SyntheticData out;
  for (TaskCollection* c : {&out.train, &out.validation, &out.test}) {
    c->meta_dim = spec.meta_dim;
    c->other_dim = spec.other_dim;
  }

  for (std::size_t i = 0; i < spec.num_tasks; ++i) {
    const std::string key = task_key_for(i);
    Rng rng(mix_seed(spec.seed, "task", i));

    TaskTruth truth;
    truth.latent.resize(spec.meta_dim);
    for (double& u : truth.latent) u = spec.latent_scale * rng.normal();
    truth.bias = spec.latent_scale * rng.normal();

    // Unit drift direction over [latent, bias].
    std::vector<double> drift_dir(spec.meta_dim + 1);
    double norm = 0.0;
    for (double& d : drift_dir) {
      d = rng.normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& d : drift_dir) d /= norm;
    }
    const double drift_mag = spec.drift_rate * spec.latent_scale;

    struct Window {
      TaskCollection* coll;
      std::vector<double>* probs;
      std::int64_t begin, end;
    };
    Window windows[3] = {
        {&out.train, &truth.train_probs, t0, t_val},
        {&out.validation, &truth.validation_probs, t_val, t_test},
        {&out.test, &truth.test_probs, t_test, spec.end_epoch},
    };

    for (Window& w : windows) {
      const auto count = static_cast<std::size_t>(rng.uniform_int(
          static_cast<std::int64_t>(spec.samples_min),
          static_cast<std::int64_t>(spec.samples_max)));
      std::vector<std::int64_t> times(count);
      for (auto& t : times) t = rng.uniform_int(w.begin, w.end - 1);
      std::sort(times.begin(), times.end());

      TaskDataset task;
      task.task_key = key;
      task.samples.reserve(count);
      for (std::int64_t t : times) {
        const double progress = static_cast<double>(t - t0) / span;
        Sample s;
        s.task_key = key;
        s.timestamp = t;
        s.meta_features.resize(spec.meta_dim);
        s.other_features.resize(spec.other_dim);
        double logit = 0.0;
        for (std::size_t j = 0; j < spec.meta_dim; ++j) {
          const double z = truth.latent[j] + drift_mag * progress * drift_dir[j];
          s.meta_features[j] = spec.profile_coupling * z + rng.normal();
          logit += z * s.meta_features[j];
        }
        logit += truth.bias + drift_mag * progress * drift_dir[spec.meta_dim];
        for (std::size_t j = 0; j < spec.other_dim; ++j) {
          s.other_features[j] = rng.normal();
          logit += w_global[j] * s.other_features[j];
        }
        const double p = sigmoid(logit);
        s.label = rng.bernoulli(p) ? 1 : 0;
        w.probs->push_back(p);
        task.samples.push_back(std::move(s));
      }
      w.coll->tasks.emplace(key, std::move(task));
    }
    out.truth.emplace(key, std::move(truth));
  }
  return out;
}

SyntheticSplits synthesize(const SyntheticSpec& spec) {
  SyntheticData d = synthesize_detailed(spec);
  return {std::move(d.train), std::move(d.validation), std::move(d.test)};
}

}  // namespace metarec
