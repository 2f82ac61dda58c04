// Online half of the decoupled design: the global block plus an embedding
// snapshot score requests with no gradient machinery anywhere on the path
// (the scorer only calls the graph-free eval_mlp forward).
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "metarec/bundle.hpp"
#include "metarec/store.hpp"

namespace metarec {

enum class Fallback : std::uint8_t { kZero, kMean };

Fallback fallback_from_string(const std::string& s);
std::string to_string(Fallback f);

struct ScoreRequest {
  std::string task_key;
  std::vector<double> meta_features;
  std::vector<double> other_features;
};

struct ScoreResponse {
  double score = 0.0;
  bool from_store = false;  // embedding_source: stored vs fallback
  std::string version;
};

class Scorer {
 public:
  // Validates that the snapshot dimension matches the bundle; the mean
  // fallback embedding is precomputed at load.
  Scorer(ModelBundle bundle, EmbeddingSnapshot snapshot,
         Fallback fallback = Fallback::kZero);

  // Feature-length mismatches throw std::invalid_argument; lookups never
  // fail (unknown keys use the fallback embedding).
  ScoreResponse score(const ScoreRequest& request) const;

  const ModelBundle& bundle() const { return bundle_; }
  const EmbeddingSnapshot& snapshot() const { return snapshot_; }

 private:
  ModelBundle bundle_;
  EmbeddingSnapshot snapshot_;
  Fallback fallback_;
  Tensor fallback_embedding_;  // 1 x dim
};

// JSON-lines scoring: one response object per request line, order
// preserved; malformed lines yield {"error": ...} objects and the stream
// continues.
void batch_score(const Scorer& scorer, std::istream& in, std::ostream& out);

// Parse/serialize helpers shared by the stdio and socket transports.
std::string score_line(const Scorer& scorer, const std::string& line);

// Line-protocol listener on 127.0.0.1; one JSON request per line, answered
// by the same handler as batch_score. Connections are served sequentially.
class SocketServer {
 public:
  // Binds and listens; port 0 picks an ephemeral port.
  SocketServer(const Scorer& scorer, int port);
  ~SocketServer();
  SocketServer(const SocketServer&) = delete;
  SocketServer& operator=(const SocketServer&) = delete;

  int port() const { return port_; }
  // Accept loop; returns after shutdown().
  void run();
  // Thread-safe; wakes a blocked accept.
  void shutdown();

 private:
  const Scorer& scorer_;
  int listen_fd_ = -1;
  int port_ = 0;
};

}  // namespace metarec
