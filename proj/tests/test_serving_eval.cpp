#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <sstream>
#include <thread>

#include "metarec/embedgen.hpp"
#include "metarec/eval.hpp"
#include "metarec/serving.hpp"
#include "metarec/sweep.hpp"
#include "metarec/synthetic.hpp"
#include "metarec/training.hpp"
#include "metarec/util.hpp"
#include "test_support.hpp"

using namespace metarec;

namespace {

struct Fixture {
  SyntheticSplits data;
  ModelBundle bundle;
  EmbeddingSnapshot snapshot;

  static Fixture make(std::uint64_t seed = 7) {
    SyntheticSpec spec;
    spec.num_tasks = 20;
    spec.samples_min = 4;
    spec.samples_max = 20;
    spec.meta_dim = 3;
    spec.other_dim = 2;
    spec.seed = seed;
    Fixture f;
    f.data = synthesize(spec);
    f.bundle = make_mlp_bundle(3, 2, {4}, 3, {5}, true, seed);
    EmbedGenConfig config;
    config.k = 1;
    config.alpha = 0.2;
    config.window_days = 90;
    config.version = "2026-01-01";
    const EmbedGenResult gen =
        generate_embeddings(f.data.validation, f.bundle, config);
    f.snapshot = make_snapshot(gen.embeddings, config.version, 3);
    return f;
  }
};

}  // namespace

TEST_CASE("auc handles the documented examples") {
  CHECK(auc(std::vector<double>{0.9, 0.8, 0.1, 0.2},
            std::vector<int>{1, 1, 0, 0})
            .value == 1.0);
  const AucResult ties =
      auc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0});
  CHECK(ties.value == 0.5);
  const AucResult mixed = auc(std::vector<double>{0.1, 0.4, 0.35, 0.8},
                              std::vector<int>{0, 0, 1, 1});
  CHECK(mixed.value == 0.75);
  const AucResult single = auc(std::vector<double>{0.5, 0.6},
                               std::vector<int>{1, 1});
  CHECK_FALSE(single.defined);
}

TEST_CASE("rank-sum auc equals brute-force pairwise counting exactly") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_int(0, 60));
    std::vector<double> scores;
    std::vector<int> labels;
    bool pos = false, neg = false;
    for (int i = 0; i < n; ++i) {
      // coarse grid forces plenty of ties
      scores.push_back(rng.uniform_int(0, 8) / 8.0);
      labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
      (labels.back() == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) continue;
    const AucResult fast = auc(scores, labels);
    const double slow = testsupport::brute_force_auc(scores, labels);
    CHECK(fast.value == slow);
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  Rng rng(3);
  std::vector<double> scores;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    scores.push_back(rng.uniform());
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  const double base = auc(scores, labels).value;
  std::vector<double> squashed;
  for (double s : scores) squashed.push_back(std::tanh(3.0 * s) + 5.0);
  CHECK(auc(squashed, labels).value == base);
}

TEST_CASE("auc label-flip complement holds without ties") {
  Rng rng(17);
  std::vector<double> scores;
  std::vector<int> labels, flipped;
  for (int i = 0; i < 100; ++i) {
    scores.push_back(rng.uniform());  // continuous, no ties
    labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
    flipped.push_back(1 - labels.back());
  }
  const double a = auc(scores, labels).value;
  const double b = auc(scores, flipped).value;
  CHECK(a + b == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fine-tune with k=0 reports exactly the no-fine-tune numbers") {
  const Fixture f = Fixture::make();
  EvalProtocol no_ft;
  no_ft.mode = EvalMode::kNoFineTune;
  EvalProtocol k0;
  k0.mode = EvalMode::kFineTune;
  k0.fine_tune_steps = 0;
  const EvalReport a = evaluate(f.bundle, no_ft, f.data.validation, f.data.test);
  const EvalReport b = evaluate(f.bundle, k0, f.data.validation, f.data.test);
  CHECK(a.overall.value == b.overall.value);
  CHECK(a.scores == b.scores);
}

TEST_CASE("evaluate never mutates the bundle and counts cohorts") {
  const Fixture f = Fixture::make();
  const ParamSet meta_before = f.bundle.theta_meta;
  const ParamSet global_before = f.bundle.theta_global;
  EvalProtocol ft;
  ft.mode = EvalMode::kFineTune;
  ft.fine_tune_steps = 4;
  ft.fine_tune_alpha = 0.5;
  const EvalReport r = evaluate(f.bundle, ft, f.data.validation, f.data.test);
  CHECK(f.bundle.theta_meta == meta_before);
  CHECK(f.bundle.theta_global == global_before);
  CHECK(r.task_count == f.data.test.task_count());
  std::size_t cohort_tasks = 0;
  for (const CohortStat& c : r.cohorts) cohort_tasks += c.task_count;
  CHECK(cohort_tasks == r.task_count);
  CHECK(r.adapted_task_count + r.unadapted_task_count == r.task_count);
}

TEST_CASE("homogeneous tasks leave nothing for fine-tuning to learn") {
  SyntheticSpec spec;
  spec.num_tasks = 30;
  spec.samples_min = 10;
  spec.samples_max = 30;
  spec.meta_dim = 2;
  spec.other_dim = 2;
  spec.latent_scale = 0.0;  // identical tasks
  spec.seed = 23;
  const SyntheticSplits data = synthesize(spec);
  const TaskCollection train = split_support_query(data.train);

  TrainConfig config;
  config.total_steps = 60;
  config.warmup_steps = 5;
  config.tasks_per_batch = 10;
  config.beta = 0.02;
  config.alpha = 0.3;
  config.seed = 2;
  const MlpSpec spec_mlp = classifier_spec(4, {6});
  const TrainResult r = vanilla_train(train, spec_mlp, config);

  EvalProtocol no_ft;
  EvalProtocol ft;
  ft.mode = EvalMode::kFineTune;
  ft.fine_tune_steps = 3;
  ft.fine_tune_alpha = 0.1;
  const EvalReport a = evaluate(r.bundle, no_ft, data.validation, data.test);
  const EvalReport b = evaluate(r.bundle, ft, data.validation, data.test);
  CHECK(std::fabs(a.overall.value - b.overall.value) < 0.005);
}

TEST_CASE("auc_gain reports relative percent and absolute delta") {
  const AucGain g = auc_gain(0.75, 0.7);
  CHECK(g.absolute == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(g.relative_pct == doctest::Approx(100.0 * 0.05 / 0.7).epsilon(1e-12));
}

TEST_CASE("scorer matches the snapshot evaluation path bit for bit") {
  const Fixture f = Fixture::make();
  const Scorer scorer(f.bundle, f.snapshot, Fallback::kZero);
  const EvalReport via_eval =
      evaluate_with_snapshot(f.bundle, f.snapshot, f.data.test);
  std::size_t i = 0;
  for (const auto& [key, task] : f.data.test.tasks) {
    for (const Sample& s : task.samples) {
      const ScoreResponse res =
          scorer.score({key, s.meta_features, s.other_features});
      CHECK(res.score == via_eval.scores[i]);
      ++i;
    }
  }
}

TEST_CASE("unknown keys fall back without aborting") {
  const Fixture f = Fixture::make();
  const Scorer zero(f.bundle, f.snapshot, Fallback::kZero);
  const ScoreResponse res =
      zero.score({"missing-task", {0.1, 0.2, 0.3}, {0.5, -0.5}});
  CHECK_FALSE(res.from_store);
  CHECK(res.score > 0.0);
  CHECK(res.score < 1.0);

  // mean fallback equals scoring with the snapshot's element-wise mean
  const Scorer mean(f.bundle, f.snapshot, Fallback::kMean);
  const ScoreResponse res_mean =
      mean.score({"missing-task", {0.1, 0.2, 0.3}, {0.5, -0.5}});
  std::vector<double> avg(f.snapshot.dim, 0.0);
  for (const auto& [key, vec] : f.snapshot.records) {
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += vec[j];
  }
  for (double& v : avg) v /= static_cast<double>(f.snapshot.count());
  Tensor emb(1, avg.size());
  for (std::size_t j = 0; j < avg.size(); ++j) emb[j] = avg[j];
  Tensor meta(1, 3);
  meta[0] = 0.1;
  meta[1] = 0.2;
  meta[2] = 0.3;
  Tensor other(1, 2);
  other[0] = 0.5;
  other[1] = -0.5;
  const Tensor expected =
      global_eval_with_embedding(f.bundle, emb, meta, other);
  CHECK(res_mean.score == expected[0]);
}

TEST_CASE("batch_score preserves order and isolates malformed lines") {
  const Fixture f = Fixture::make();
  const Scorer scorer(f.bundle, f.snapshot, Fallback::kZero);

  std::ostringstream requests;
  std::vector<std::string> keys;
  int count = 0;
  for (const auto& [key, task] : f.data.test.tasks) {
    const Sample& s = task.samples.front();
    std::string line = "{\"task_key\": \"" + key + "\", \"meta_features\": [";
    for (std::size_t j = 0; j < s.meta_features.size(); ++j) {
      line += (j ? "," : "") + std::to_string(s.meta_features[j]);
    }
    line += "], \"other_features\": [";
    for (std::size_t j = 0; j < s.other_features.size(); ++j) {
      line += (j ? "," : "") + std::to_string(s.other_features[j]);
    }
    line += "]}";
    requests << line << "\n";
    keys.push_back(key);
    if (++count == 3) requests << "this is not json\n";
  }
  std::istringstream in(requests.str());
  std::ostringstream out;
  batch_score(scorer, in, out);

  std::istringstream lines(out.str());
  std::string line;
  std::size_t responses = 0, errors = 0;
  while (std::getline(lines, line)) {
    ++responses;
    if (line.find("\"error\"") != std::string::npos) ++errors;
  }
  CHECK(responses == keys.size() + 1);
  CHECK(errors == 1);

  // empty input, empty output
  std::istringstream empty_in("");
  std::ostringstream empty_out;
  batch_score(scorer, empty_in, empty_out);
  CHECK(empty_out.str().empty());
}

TEST_CASE("socket transport answers the same bytes as the stdio transport") {
  const Fixture f = Fixture::make();
  const Scorer scorer(f.bundle, f.snapshot, Fallback::kZero);

  std::string request_text;
  int n = 0;
  for (const auto& [key, task] : f.data.test.tasks) {
    const Sample& s = task.samples.front();
    std::string line = "{\"task_key\": \"" + key + "\", \"meta_features\": [";
    for (std::size_t j = 0; j < s.meta_features.size(); ++j) {
      line += (j ? "," : "") + std::to_string(s.meta_features[j]);
    }
    line += "], \"other_features\": [";
    for (std::size_t j = 0; j < s.other_features.size(); ++j) {
      line += (j ? "," : "") + std::to_string(s.other_features[j]);
    }
    line += "]}";
    request_text += line + "\n";
    if (++n == 5) break;
  }

  std::istringstream in(request_text);
  std::ostringstream stdio_out;
  batch_score(scorer, in, stdio_out);

  SocketServer server(scorer, 0);
  std::thread server_thread([&] { server.run(); });

  // plain blocking client
  std::string socket_out;
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(server.port()));
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  REQUIRE(::write(fd, request_text.data(), request_text.size()) ==
          static_cast<ssize_t>(request_text.size()));
  ::shutdown(fd, SHUT_WR);
  char chunk[4096];
  while (true) {
    const ssize_t got = ::read(fd, chunk, sizeof(chunk));
    if (got <= 0) break;
    socket_out.append(chunk, static_cast<std::size_t>(got));
  }
  ::close(fd);
  server.shutdown();
  server_thread.join();
  CHECK(socket_out == stdio_out.str());
}

TEST_CASE("sweep seeds follow the documented derivation") {
  CHECK(sweep_seed(3, 0, 0) == 3 * 10007);
  CHECK(sweep_seed(3, 2, 1) == 3 * 10007 + 2 * 101 + 1);
}

TEST_CASE("run_sweep emits one row per value per replicate and survives bad runs") {
  SyntheticSpec spec;
  spec.num_tasks = 10;
  spec.samples_min = 6;
  spec.samples_max = 12;
  spec.meta_dim = 2;
  spec.other_dim = 2;
  spec.seed = 5;
  const SyntheticData d = synthesize_detailed(spec);
  const TaskCollection train = split_support_query(d.train);

  SweepSpec sweep;
  sweep.param = SweepParam::kInnerSteps;
  sweep.values = {"1", "-4", "2"};  // the middle value fails validation
  sweep.replicates = 2;

  SweepContext context;
  context.algorithm = "maml";
  context.base_config.total_steps = 6;
  context.base_config.warmup_steps = 1;
  context.base_config.tasks_per_batch = 4;
  context.base_config.seed = 9;
  context.protocol.mode = EvalMode::kFineTune;
  context.protocol.fine_tune_steps = 2;
  context.vanilla_baseline = false;
  context.plain_hidden = {4};

  const std::vector<SweepRow> rows =
      run_sweep(sweep, context, train, d.validation, d.test);
  REQUIRE(rows.size() == 6);
  int failed = 0;
  for (const SweepRow& r : rows) {
    if (r.failed) ++failed;
  }
  CHECK(failed == 2);
  const std::string csv = sweep_csv(sweep, rows);
  CHECK(csv.find("param,value,replicate") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
}
