#include "metarec/embedgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "metarec/adapt.hpp"
#include "metarec/loss.hpp"

namespace metarec {

Pooling pooling_from_string(const std::string& s) {
  if (s == "latest") return Pooling::kLatest;
  if (s == "max") return Pooling::kMax;
  if (s == "mean") return Pooling::kMean;
  if (s == "cos") return Pooling::kCos;
  throw std::invalid_argument("unknown pooling '" + s + "'");
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::kLatest: return "latest";
    case Pooling::kMax: return "max";
    case Pooling::kMean: return "mean";
    case Pooling::kCos: return "cos";
  }
  return "latest";
}

void EmbedGenConfig::validate() const {
  if (k < 0) throw std::invalid_argument("EmbedGenConfig: k must be >= 0");
  if (window_days < 1) {
    throw std::invalid_argument("EmbedGenConfig: window_days must be >= 1");
  }
  if (min_samples < 1) {
    throw std::invalid_argument("EmbedGenConfig: min_samples must be >= 1");
  }
  date_to_epoch(version);  // throws on malformed dates
}

std::int64_t date_to_epoch(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
    throw std::invalid_argument("date must be YYYY-MM-DD, got '" + s + "'");
  }
  int y = 0, m = 0, d = 0;
  try {
    y = std::stoi(s.substr(0, 4));
    m = std::stoi(s.substr(5, 2));
    d = std::stoi(s.substr(8, 2));
  } catch (const std::exception&) {
    throw std::invalid_argument("date must be YYYY-MM-DD, got '" + s + "'");
  }
  if (m < 1 || m > 12 || d < 1 || d > 31) {
    throw std::invalid_argument("date out of range: '" + s + "'");
  }
  // days from civil (proleptic Gregorian), epoch 1970-01-01
  const int yy = y - (m <= 2 ? 1 : 0);
  const int era = (yy >= 0 ? yy : yy - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(yy - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
      static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  const std::int64_t days =
      static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) -
      719468;
  return days * 86400;
}

std::vector<Sample> select_window(const TaskDataset& task, int window_days,
                                  std::int64_t as_of) {
  if (window_days < 1) {
    throw std::invalid_argument("select_window: window must be >= 1 day");
  }
  const std::int64_t begin =
      as_of - static_cast<std::int64_t>(window_days) * 86400;
  std::vector<Sample> out;
  for (const Sample& s : task.samples) {
    if (s.timestamp > begin && s.timestamp <= as_of) out.push_back(s);
  }
  return out;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<double> pool(const std::vector<std::vector<double>>& embeddings,
                         Pooling mode) {
  if (embeddings.empty()) {
    throw std::invalid_argument("pool: empty embedding list");
  }
  const std::size_t dim = embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != dim) {
      throw std::invalid_argument("pool: embedding length mismatch");
    }
  }
  switch (mode) {
    case Pooling::kLatest:
      return embeddings.back();
    case Pooling::kMax: {
      std::vector<double> out = embeddings.front();
      for (const auto& e : embeddings) {
        for (std::size_t j = 0; j < dim; ++j) out[j] = std::max(out[j], e[j]);
      }
      return out;
    }
    case Pooling::kMean: {
      std::vector<double> out(dim, 0.0);
      for (const auto& e : embeddings) {
        for (std::size_t j = 0; j < dim; ++j) out[j] += e[j];
      }
      for (double& v : out) v /= static_cast<double>(embeddings.size());
      return out;
    }
    case Pooling::kCos: {
      const std::vector<double>& latest = embeddings.back();
      std::vector<double> out(dim, 0.0);
      double weight_sum = 0.0;
      for (const auto& e : embeddings) {
        const double w = std::max(0.0, cosine(e, latest));
        weight_sum += w;
        for (std::size_t j = 0; j < dim; ++j) out[j] += w * e[j];
      }
      if (weight_sum == 0.0) return latest;
      for (double& v : out) v /= weight_sum;
      return out;
    }
  }
  throw std::logic_error("pool: bad mode");
}

ParamSet adapt_meta_for_task(const ModelBundle& bundle,
                             std::span<const Sample> samples, int k,
                             double alpha) {
  if (bundle.meta_arch.kind == MetaBlockKind::kNone) {
    throw std::invalid_argument("adapt_meta_for_task: bundle has no meta block");
  }
  const std::string& key = samples.empty() ? std::string() : samples[0].task_key;
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
  if (k == 0 || samples.empty()) return meta_leaves.values();

  const Tensor meta_X = meta_matrix(samples);
  const Tensor other_X = other_matrix(samples);
  const std::vector<int> labels = label_vector(samples);
  const ParamVars global_const = ParamVars::constants(bundle.theta_global);
  const LossFn loss = [&](const ParamVars& meta_p) {
    const Var probs = bundle_forward(bundle, meta_p, global_const, key, meta_X,
                                     other_X, Mode::kEval, nullptr);
    return bce_mean(probs, labels);
  };
  return unrolled_adapt(meta_leaves, loss, alpha, k).adapted.values();
}

Tensor meta_block_eval_adapted(const ModelBundle& bundle,
                               const ParamSet& adapted,
                               const std::string& task_key,
                               const Tensor& meta_X) {
  if (bundle.meta_arch.kind == MetaBlockKind::kIdEmbedding) {
    const std::string row = id_row_name(task_key);
    if (adapted.contains(row)) {
      return broadcast_rows(adapted.at(row), meta_X.rows());
    }
    return meta_block_eval(bundle, bundle.theta_meta, task_key, meta_X);
  }
  return meta_block_eval(bundle, adapted, task_key, meta_X);
}

EmbedGenResult generate_embeddings(const TaskCollection& tasks,
                                   const ModelBundle& bundle,
                                   const EmbedGenConfig& config, int workers) {
  config.validate();
  bundle.validate();
  if (bundle.meta_arch.kind == MetaBlockKind::kNone) {
    throw std::invalid_argument("generate_embeddings: bundle has no meta block");
  }
  if (workers < 1) {
    throw std::invalid_argument("generate_embeddings: workers must be >= 1");
  }
  const std::int64_t as_of = date_to_epoch(config.version) + 86400 - 1;

  std::vector<const TaskDataset*> ordered;
  ordered.reserve(tasks.tasks.size());
  for (const auto& [key, task] : tasks.tasks) ordered.push_back(&task);

  enum class Outcome : std::uint8_t { kOk, kNoSamples, kNonFinite };
  struct Slot {
    Outcome outcome = Outcome::kNoSamples;
    MetaEmbedding embedding;
  };
  std::vector<Slot> slots(ordered.size());

  const auto run_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const TaskDataset& task = *ordered[i];
      const std::vector<Sample> window =
          select_window(task, config.window_days, as_of);
      if (window.size() < config.min_samples) {
        slots[i].outcome = Outcome::kNoSamples;
        continue;
      }
      ParamSet adapted;
      try {
        adapted = adapt_meta_for_task(bundle, window, config.k, config.alpha);
      } catch (const std::runtime_error&) {
        slots[i].outcome = Outcome::kNonFinite;
        continue;
      }
      const Tensor per_sample = meta_block_eval_adapted(
          bundle, adapted, task.task_key, meta_matrix(window));
      std::vector<std::vector<double>> rows(per_sample.rows());
      for (std::size_t r = 0; r < per_sample.rows(); ++r) {
        rows[r].resize(per_sample.cols());
        for (std::size_t c = 0; c < per_sample.cols(); ++c) {
          rows[r][c] = per_sample.at(r, c);
        }
      }
      slots[i].outcome = Outcome::kOk;
      slots[i].embedding = MetaEmbedding{task.task_key,
                                         pool(rows, config.pooling),
                                         config.version, window.size()};
    }
  };

  if (workers == 1 || ordered.size() <= 1) {
    run_range(0, ordered.size());
  } else {
    const auto w = static_cast<std::size_t>(workers);
    const std::size_t n = ordered.size();
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

  EmbedGenResult out;
  for (Slot& slot : slots) {
    switch (slot.outcome) {
      case Outcome::kOk:
        out.embeddings.push_back(std::move(slot.embedding));
        break;
      case Outcome::kNoSamples:
        ++out.skipped_no_samples;
        break;
      case Outcome::kNonFinite:
        ++out.skipped_non_finite;
        break;
    }
  }
  return out;
}

}  // namespace metarec
