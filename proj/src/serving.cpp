#include "metarec/serving.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace metarec {

Fallback fallback_from_string(const std::string& s) {
  if (s == "zero") return Fallback::kZero;
  if (s == "mean") return Fallback::kMean;
  throw std::invalid_argument("unknown fallback '" + s + "'");
}

std::string to_string(Fallback f) {
  return f == Fallback::kMean ? "mean" : "zero";
}

Scorer::Scorer(ModelBundle bundle, EmbeddingSnapshot snapshot,
               Fallback fallback)
    : bundle_(std::move(bundle)),
      snapshot_(std::move(snapshot)),
      fallback_(fallback) {
  bundle_.validate();
  snapshot_.validate();
  if (bundle_.meta_arch.kind != MetaBlockKind::kNone &&
      snapshot_.dim != bundle_.embedding_dim()) {
    throw std::invalid_argument(
        "Scorer: snapshot dimension " + std::to_string(snapshot_.dim) +
        " does not match bundle embedding dim " +
        std::to_string(bundle_.embedding_dim()));
  }
  const std::size_t dim = bundle_.embedding_dim();
  fallback_embedding_ = Tensor(1, dim, 0.0);
  if (fallback_ == Fallback::kMean && !snapshot_.records.empty()) {
    for (const auto& [key, vec] : snapshot_.records) {
      for (std::size_t j = 0; j < dim; ++j) {
        fallback_embedding_[j] += static_cast<double>(vec[j]);
      }
    }
    for (std::size_t j = 0; j < dim; ++j) {
      fallback_embedding_[j] /= static_cast<double>(snapshot_.records.size());
    }
  }
}

ScoreResponse Scorer::score(const ScoreRequest& request) const {
  const bool needs_meta = bundle_.meta_arch.kind == MetaBlockKind::kNone ||
                          bundle_.feed_meta_to_global;
  if (needs_meta && request.meta_features.size() != bundle_.meta_dim) {
    throw std::invalid_argument(
        "score: meta_features length " +
        std::to_string(request.meta_features.size()) + ", expected " +
        std::to_string(bundle_.meta_dim));
  }
  if (request.other_features.size() != bundle_.other_dim) {
    throw std::invalid_argument(
        "score: other_features length " +
        std::to_string(request.other_features.size()) + ", expected " +
        std::to_string(bundle_.other_dim));
  }
  ScoreResponse out;
  out.version = snapshot_.version;
  Tensor embedding = fallback_embedding_;
  if (bundle_.meta_arch.kind != MetaBlockKind::kNone) {
    if (const auto stored = lookup(snapshot_, request.task_key)) {
      for (std::size_t j = 0; j < embedding.size(); ++j) {
        embedding[j] = static_cast<double>((*stored)[j]);
      }
      out.from_store = true;
    }
  }
  Tensor meta_X(1, bundle_.meta_dim, 0.0);
  for (std::size_t j = 0; j < request.meta_features.size() &&
                          j < bundle_.meta_dim;
       ++j) {
    meta_X[j] = request.meta_features[j];
  }
  Tensor other_X(1, bundle_.other_dim);
  for (std::size_t j = 0; j < bundle_.other_dim; ++j) {
    other_X[j] = request.other_features[j];
  }
  const Tensor p =
      global_eval_with_embedding(bundle_, embedding, meta_X, other_X);
  out.score = p[0];
  return out;
}

std::string score_line(const Scorer& scorer, const std::string& line) {
  nlohmann::json response;
  try {
    const nlohmann::json obj = nlohmann::json::parse(line);
    ScoreRequest req;
    req.task_key = obj.at("task_key").get<std::string>();
    if (obj.contains("meta_features")) {
      req.meta_features = obj.at("meta_features").get<std::vector<double>>();
    }
    req.other_features = obj.at("other_features").get<std::vector<double>>();
    const ScoreResponse res = scorer.score(req);
    response["score"] = res.score;
    response["embedding_source"] = res.from_store ? "stored" : "fallback";
    response["version"] = res.version;
  } catch (const std::exception& e) {
    response = nlohmann::json{{"error", e.what()}};
  }
  return response.dump();
}

void batch_score(const Scorer& scorer, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << score_line(scorer, line) << '\n';
  }
  out.flush();
}

}  // namespace metarec
