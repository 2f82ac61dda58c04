#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "metarec/embedgen.hpp"
#include "metarec/synthetic.hpp"
#include "metarec/util.hpp"

using namespace metarec;

namespace {

// Identity-wired bundle: meta block is a single identity layer, so the
// embedding of a sample is its meta feature vector.
ModelBundle identity_meta_bundle() {
  ModelBundle b;
  b.meta_dim = 2;
  b.other_dim = 1;
  b.feed_meta_to_global = false;
  b.meta_arch.kind = MetaBlockKind::kMlp;
  b.meta_arch.embedding_dim = 2;
  b.meta_arch.mlp.input_dim = 2;
  b.meta_arch.mlp.layer_widths = {2};
  b.meta_arch.mlp.activations = {Activation::kIdentity};
  Tensor w(2, 2);
  w.at(0, 0) = 1.0;
  w.at(1, 1) = 1.0;
  b.theta_meta.insert("L00.W", w);
  b.theta_meta.insert("L00.b", Tensor(1, 2, 0.0));
  b.global_spec = classifier_spec(3, {});
  b.theta_global = init_mlp_params(b.global_spec, 3);
  b.validate();
  return b;
}

TaskDataset days_task(const std::string& key, std::int64_t end_epoch,
                      const std::vector<int>& day_offsets) {
  TaskDataset t;
  t.task_key = key;
  Rng rng(fnv1a(key));
  for (int d : day_offsets) {
    Sample s;
    s.task_key = key;
    s.timestamp = end_epoch - static_cast<std::int64_t>(d) * 86400;
    s.label = rng.bernoulli(0.5) ? 1 : 0;
    s.meta_features = {rng.normal(), rng.normal()};
    s.other_features = {rng.normal()};
    t.samples.push_back(std::move(s));
  }
  std::sort(t.samples.begin(), t.samples.end(),
            [](const Sample& a, const Sample& b) {
              return a.timestamp < b.timestamp;
            });
  return t;
}

}  // namespace

TEST_CASE("date_to_epoch handles civil dates") {
  CHECK(date_to_epoch("1970-01-01") == 0);
  CHECK(date_to_epoch("2026-01-01") == 1767225600);
  CHECK(date_to_epoch("2025-12-31") == 1767225600 - 86400);
  CHECK_THROWS_AS(date_to_epoch("2026/01/01"), std::invalid_argument);
  CHECK_THROWS_AS(date_to_epoch("2026-13-01"), std::invalid_argument);
}

TEST_CASE("select_window keeps the in-window suffix") {
  const std::int64_t end = date_to_epoch("2026-01-01");
  const TaskDataset task = days_task("w", end, {40, 20, 10, 5, 1, 0});
  // brute-force oracle over all samples
  for (int window : {3, 7, 15, 30, 60}) {
    const std::int64_t as_of = end;
    const std::vector<Sample> got = select_window(task, window, as_of);
    std::vector<Sample> expected;
    for (const Sample& s : task.samples) {
      if (s.timestamp > as_of - static_cast<std::int64_t>(window) * 86400 &&
          s.timestamp <= as_of) {
        expected.push_back(s);
      }
    }
    CHECK(got == expected);
  }
  // everything older than the window -> empty
  CHECK(select_window(task, 2, end + 50 * 86400).empty());
  // boundary timestamp exactly at as_of is included
  const std::vector<Sample> edge = select_window(task, 1, task.samples.back().timestamp);
  REQUIRE_FALSE(edge.empty());
  CHECK(edge.back().timestamp == task.samples.back().timestamp);
}

TEST_CASE("pool follows the documented rules") {
  const std::vector<std::vector<double>> single = {{1.0, 2.0}};
  for (Pooling mode :
       {Pooling::kLatest, Pooling::kMax, Pooling::kMean, Pooling::kCos}) {
    CHECK(pool(single, mode) == std::vector<double>{1.0, 2.0});
  }

  const std::vector<std::vector<double>> two = {{1.0, 0.0}, {0.0, 2.0}};
  CHECK(pool(two, Pooling::kMean) == std::vector<double>{0.5, 1.0});
  CHECK(pool(two, Pooling::kMax) == std::vector<double>{1.0, 2.0});
  CHECK(pool(two, Pooling::kLatest) == std::vector<double>{0.0, 2.0});

  // orthogonal prior gets zero weight under cos pooling
  const std::vector<std::vector<double>> ortho = {{0.0, 1.0}, {1.0, 0.0}};
  CHECK(pool(ortho, Pooling::kCos) == std::vector<double>{1.0, 0.0});

  // negative similarity floored at zero; all-zero weights fall back to latest
  const std::vector<std::vector<double>> opposed = {{-1.0, 0.0}, {0.0, 0.0}};
  CHECK(pool(opposed, Pooling::kCos) == std::vector<double>{0.0, 0.0});

  CHECK_THROWS_AS(pool({}, Pooling::kMean), std::invalid_argument);
  CHECK_THROWS_AS(pool({{1.0}, {1.0, 2.0}}, Pooling::kMean),
                  std::invalid_argument);
}

TEST_CASE("k=0 with an identity meta block returns the latest meta features") {
  const ModelBundle bundle = identity_meta_bundle();
  const std::int64_t end = date_to_epoch("2026-01-01");
  TaskCollection tasks;
  tasks.meta_dim = 2;
  tasks.other_dim = 1;
  tasks.tasks.emplace("w", days_task("w", end, {6, 3, 1}));

  EmbedGenConfig config;
  config.k = 0;
  config.window_days = 10;
  config.version = "2026-01-01";
  const EmbedGenResult result = generate_embeddings(tasks, bundle, config);
  REQUIRE(result.embeddings.size() == 1);
  const MetaEmbedding& e = result.embeddings[0];
  const Sample& latest = tasks.tasks.at("w").samples.back();
  CHECK(e.vector == latest.meta_features);
  CHECK(e.sample_count_used == 3);
  CHECK(e.version == "2026-01-01");
}

TEST_CASE("k=0 embeddings equal the shared meta block output") {
  SyntheticSpec spec;
  spec.num_tasks = 5;
  spec.samples_min = 4;
  spec.samples_max = 8;
  spec.meta_dim = 3;
  spec.other_dim = 2;
  spec.seed = 4;
  const SyntheticSplits s = synthesize(spec);
  const ModelBundle bundle = make_mlp_bundle(3, 2, {4}, 3, {5}, true, 11);

  EmbedGenConfig config;
  config.k = 0;
  config.window_days = 90;
  config.version = "2026-01-01";
  const EmbedGenResult result = generate_embeddings(s.validation, bundle, config);
  REQUIRE(result.embeddings.size() == 5);
  for (const MetaEmbedding& e : result.embeddings) {
    const TaskDataset& task = s.validation.tasks.at(e.task_key);
    const Tensor expected = meta_block_eval(
        bundle, bundle.theta_meta, e.task_key,
        meta_matrix({&task.samples.back(), 1}));
    for (std::size_t j = 0; j < e.vector.size(); ++j) {
      CHECK(e.vector[j] == expected.at(0, j));
    }
  }
}

TEST_CASE("k=1 on a one-parameter meta block matches the hand computation") {
  // Meta block: single identity unit with weight w (no bias handled via
  // zero-bias), wired alone into a fixed identity-like global block. With
  // one sample (x, y): p = sigmoid(v * (w*x)), dL/dw = (p - y) * v * x.
  ModelBundle b;
  b.meta_dim = 1;
  b.other_dim = 1;
  b.feed_meta_to_global = false;
  b.meta_arch.kind = MetaBlockKind::kMlp;
  b.meta_arch.embedding_dim = 1;
  b.meta_arch.mlp.input_dim = 1;
  b.meta_arch.mlp.layer_widths = {1};
  b.meta_arch.mlp.activations = {Activation::kIdentity};
  const double w0 = 0.7;
  b.theta_meta.insert("L00.W", Tensor::scalar(w0));
  b.theta_meta.insert("L00.b", Tensor(1, 1, 0.0));
  b.global_spec.input_dim = 2;  // [embedding, other]
  b.global_spec.layer_widths = {1};
  b.global_spec.activations = {Activation::kSigmoid};
  const double v = 1.3;
  Tensor gw(2, 1);
  gw.at(0, 0) = v;
  gw.at(1, 0) = 0.0;
  b.theta_global.insert("L00.W", gw);
  b.theta_global.insert("L00.b", Tensor(1, 1, 0.0));
  b.validate();

  const double x = 0.9, y = 1.0, alpha = 0.25;
  TaskCollection tasks;
  tasks.meta_dim = 1;
  tasks.other_dim = 1;
  TaskDataset t;
  t.task_key = "h";
  Sample s;
  s.task_key = "h";
  s.timestamp = date_to_epoch("2026-01-01");
  s.label = 1;
  s.meta_features = {x};
  s.other_features = {0.4};
  t.samples.push_back(s);
  tasks.tasks.emplace("h", t);

  EmbedGenConfig config;
  config.k = 1;
  config.alpha = alpha;
  config.window_days = 5;
  config.version = "2026-01-01";
  const EmbedGenResult result = generate_embeddings(tasks, b, config);
  REQUIRE(result.embeddings.size() == 1);

  // hand computation via the logistic-gradient rule (weight and bias both
  // adapt)
  const double p = 1.0 / (1.0 + std::exp(-v * w0 * x));
  const double grad_w = (p - y) * v * x;
  const double grad_b = (p - y) * v;
  const double w1 = w0 - alpha * grad_w;
  const double b1 = 0.0 - alpha * grad_b;
  const double expected = w1 * x + b1;
  CHECK(result.embeddings[0].vector[0] ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("generation is reproducible and never mutates the bundle") {
  SyntheticSpec spec;
  spec.num_tasks = 14;
  spec.samples_min = 3;
  spec.samples_max = 12;
  spec.meta_dim = 3;
  spec.other_dim = 2;
  spec.seed = 8;
  const SyntheticSplits s = synthesize(spec);
  const ModelBundle bundle = make_mlp_bundle(3, 2, {4}, 3, {5}, true, 2);
  const ParamSet meta_before = bundle.theta_meta;
  const ParamSet global_before = bundle.theta_global;

  EmbedGenConfig config;
  config.k = 3;
  config.alpha = 0.3;
  config.window_days = 90;
  config.version = "2026-01-01";
  config.pooling = Pooling::kMean;

  const EmbedGenResult a = generate_embeddings(s.validation, bundle, config, 1);
  const EmbedGenResult b = generate_embeddings(s.validation, bundle, config, 4);
  CHECK(bundle.theta_meta == meta_before);
  CHECK(bundle.theta_global == global_before);
  REQUIRE(a.embeddings.size() == b.embeddings.size());
  for (std::size_t i = 0; i < a.embeddings.size(); ++i) {
    CHECK(a.embeddings[i].task_key == b.embeddings[i].task_key);
    CHECK(a.embeddings[i].vector == b.embeddings[i].vector);
    CHECK(a.embeddings[i].vector.size() == bundle.embedding_dim());
  }
}

TEST_CASE("window sparsity and min_samples skip tasks") {
  const ModelBundle bundle = identity_meta_bundle();
  const std::int64_t end = date_to_epoch("2026-01-01");
  TaskCollection tasks;
  tasks.meta_dim = 2;
  tasks.other_dim = 1;
  tasks.tasks.emplace("fresh", days_task("fresh", end, {2, 1}));
  tasks.tasks.emplace("stale", days_task("stale", end, {50, 40}));

  EmbedGenConfig config;
  config.k = 0;
  config.window_days = 7;
  config.version = "2026-01-01";
  config.min_samples = 2;
  const EmbedGenResult result = generate_embeddings(tasks, bundle, config);
  CHECK(result.embeddings.size() == 1);
  CHECK(result.embeddings[0].task_key == "fresh");
  CHECK(result.skipped_no_samples == 1);
}

TEST_CASE("id-embedding generation adapts only the task row") {
  std::vector<std::string> keys = {"a", "b"};
  const ModelBundle bundle = make_id_bundle(2, 1, 3, keys, {4}, true, 6);
  const std::int64_t end = date_to_epoch("2026-01-01");
  TaskCollection tasks;
  tasks.meta_dim = 2;
  tasks.other_dim = 1;
  tasks.tasks.emplace("a", days_task("a", end, {3, 2, 1}));

  EmbedGenConfig config;
  config.k = 2;
  config.alpha = 0.5;
  config.window_days = 10;
  config.version = "2026-01-01";
  const EmbedGenResult result = generate_embeddings(tasks, bundle, config);
  REQUIRE(result.embeddings.size() == 1);
  // the shared table is untouched; the emitted embedding differs from the
  // stored row because of the fine-tune steps
  const Tensor& row = bundle.theta_meta.at(id_row_name("a"));
  bool differs = false;
  for (std::size_t j = 0; j < 3; ++j) {
    if (result.embeddings[0].vector[j] != row.at(0, j)) differs = true;
  }
  CHECK(differs);
}
