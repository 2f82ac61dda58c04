#include "metarec/bundle.hpp"

#include <stdexcept>

#include "metarec/util.hpp"

namespace metarec {

MetaBlockKind meta_block_kind_from_string(const std::string& s) {
  if (s == "none") return MetaBlockKind::kNone;
  if (s == "mlp") return MetaBlockKind::kMlp;
  if (s == "id-embedding") return MetaBlockKind::kIdEmbedding;
  throw std::invalid_argument("unknown meta block kind '" + s + "'");
}

std::string to_string(MetaBlockKind k) {
  switch (k) {
    case MetaBlockKind::kNone: return "none";
    case MetaBlockKind::kMlp: return "mlp";
    case MetaBlockKind::kIdEmbedding: return "id-embedding";
  }
  return "none";
}

std::string id_row_name(const std::string& task_key) {
  return kIdRowPrefix + task_key;
}

std::size_t ModelBundle::global_input_dim() const {
  if (meta_arch.kind == MetaBlockKind::kNone) return meta_dim + other_dim;
  return meta_arch.embedding_dim + other_dim +
         (feed_meta_to_global ? meta_dim : 0);
}

void ModelBundle::validate() const {
  global_spec.validate();
  if (global_spec.input_dim != global_input_dim()) {
    throw std::invalid_argument(
        "ModelBundle: global block expects input width " +
        std::to_string(global_spec.input_dim) + " but wiring provides " +
        std::to_string(global_input_dim()));
  }
  switch (meta_arch.kind) {
    case MetaBlockKind::kNone:
      break;
    case MetaBlockKind::kMlp:
      meta_arch.mlp.validate();
      if (meta_arch.embedding_dim < 1 ||
          meta_arch.mlp.output_dim() != meta_arch.embedding_dim) {
        throw std::invalid_argument(
            "ModelBundle: meta MLP output width must equal embedding_dim");
      }
      if (meta_arch.mlp.input_dim != meta_dim) {
        throw std::invalid_argument(
            "ModelBundle: meta MLP input width must equal meta_dim");
      }
      break;
    case MetaBlockKind::kIdEmbedding:
      if (meta_arch.embedding_dim < 1) {
        throw std::invalid_argument("ModelBundle: embedding_dim must be >= 1");
      }
      for (const auto& [name, row] : theta_meta) {
        if (row.rows() != 1 || row.cols() != meta_arch.embedding_dim) {
          throw std::invalid_argument("ModelBundle: id row '" + name +
                                      "' has wrong shape " + row.shape_str());
        }
      }
      break;
  }
}

MlpSpec classifier_spec(std::size_t input_dim,
                        const std::vector<std::size_t>& hidden) {
  MlpSpec spec;
  spec.input_dim = input_dim;
  spec.layer_widths = hidden;
  spec.layer_widths.push_back(1);
  spec.activations.assign(hidden.size(), Activation::kTanh);
  spec.activations.push_back(Activation::kSigmoid);
  return spec;
}

ModelBundle make_plain_bundle(std::size_t meta_dim, std::size_t other_dim,
                              const std::vector<std::size_t>& hidden_widths,
                              std::uint64_t seed) {
  ModelBundle b;
  b.meta_dim = meta_dim;
  b.other_dim = other_dim;
  b.meta_arch.kind = MetaBlockKind::kNone;
  b.global_spec = classifier_spec(meta_dim + other_dim, hidden_widths);
  b.theta_global = init_mlp_params(b.global_spec, mix_seed(seed, "global"));
  b.validate();
  return b;
}

ModelBundle make_mlp_bundle(std::size_t meta_dim, std::size_t other_dim,
                            const std::vector<std::size_t>& meta_hidden,
                            std::size_t embedding_dim,
                            const std::vector<std::size_t>& global_hidden,
                            bool feed_meta_to_global, std::uint64_t seed) {
  ModelBundle b;
  b.meta_dim = meta_dim;
  b.other_dim = other_dim;
  b.feed_meta_to_global = feed_meta_to_global;
  b.meta_arch.kind = MetaBlockKind::kMlp;
  b.meta_arch.embedding_dim = embedding_dim;
  b.meta_arch.mlp.input_dim = meta_dim;
  b.meta_arch.mlp.layer_widths = meta_hidden;
  b.meta_arch.mlp.layer_widths.push_back(embedding_dim);
  b.meta_arch.mlp.activations.assign(meta_hidden.size(), Activation::kTanh);
  b.meta_arch.mlp.activations.push_back(Activation::kTanh);
  b.theta_meta = init_mlp_params(b.meta_arch.mlp, mix_seed(seed, "meta"));
  b.global_spec = classifier_spec(b.global_input_dim(), global_hidden);
  b.theta_global = init_mlp_params(b.global_spec, mix_seed(seed, "global"));
  b.validate();
  return b;
}

ModelBundle make_id_bundle(std::size_t meta_dim, std::size_t other_dim,
                           std::size_t embedding_dim,
                           const std::vector<std::string>& task_keys,
                           const std::vector<std::size_t>& global_hidden,
                           bool feed_meta_to_global, std::uint64_t seed) {
  ModelBundle b;
  b.meta_dim = meta_dim;
  b.other_dim = other_dim;
  b.feed_meta_to_global = feed_meta_to_global;
  b.meta_arch.kind = MetaBlockKind::kIdEmbedding;
  b.meta_arch.embedding_dim = embedding_dim;
  for (const std::string& key : task_keys) {
    // Row init depends only on (seed, key), never on insertion order.
    Rng rng(mix_seed(seed, "id-row", fnv1a(key)));
    Tensor row(1, embedding_dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(embedding_dim + 1));
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = rng.uniform(-bound, bound);
    }
    b.theta_meta.insert(id_row_name(key), std::move(row));
  }
  b.global_spec = classifier_spec(b.global_input_dim(), global_hidden);
  b.theta_global = init_mlp_params(b.global_spec, mix_seed(seed, "global"));
  b.validate();
  return b;
}

Var meta_block_forward(const ModelBundle& bundle, const ParamVars& theta_meta,
                       const std::string& task_key, const Var& meta_X,
                       Mode mode, Rng* rng) {
  switch (bundle.meta_arch.kind) {
    case MetaBlockKind::kNone:
      throw std::logic_error("meta_block_forward: bundle has no meta block");
    case MetaBlockKind::kMlp:
      return forward_mlp(bundle.meta_arch.mlp, theta_meta, meta_X, mode, rng);
    case MetaBlockKind::kIdEmbedding: {
      const std::string name = id_row_name(task_key);
      if (theta_meta.contains(name)) {
        return broadcast_rows(theta_meta.at(name), meta_X.rows());
      }
      return broadcast_rows(
          Var::constant(Tensor(1, bundle.meta_arch.embedding_dim, 0.0)),
          meta_X.rows());
    }
  }
  throw std::logic_error("meta_block_forward: bad kind");
}

Var bundle_forward(const ModelBundle& bundle, const ParamVars& theta_meta,
                   const ParamVars& theta_global, const std::string& task_key,
                   const Tensor& meta_X, const Tensor& other_X, Mode mode,
                   Rng* rng) {
  const Var meta_const = Var::constant(meta_X);
  const Var other_const = Var::constant(other_X);
  std::vector<Var> parts;
  if (bundle.meta_arch.kind == MetaBlockKind::kNone) {
    parts = {meta_const, other_const};
  } else {
    parts.push_back(
        meta_block_forward(bundle, theta_meta, task_key, meta_const, mode, rng));
    if (bundle.feed_meta_to_global) parts.push_back(meta_const);
    parts.push_back(other_const);
  }
  return forward_mlp(bundle.global_spec, theta_global, concat_cols(parts),
                     mode, rng);
}

Tensor meta_block_eval(const ModelBundle& bundle, const ParamSet& theta_meta,
                       const std::string& task_key, const Tensor& meta_X) {
  switch (bundle.meta_arch.kind) {
    case MetaBlockKind::kNone:
      throw std::logic_error("meta_block_eval: bundle has no meta block");
    case MetaBlockKind::kMlp:
      return eval_mlp(bundle.meta_arch.mlp, theta_meta, meta_X);
    case MetaBlockKind::kIdEmbedding: {
      const std::string name = id_row_name(task_key);
      if (theta_meta.contains(name)) {
        return broadcast_rows(theta_meta.at(name), meta_X.rows());
      }
      return Tensor(meta_X.rows(), bundle.meta_arch.embedding_dim, 0.0);
    }
  }
  throw std::logic_error("meta_block_eval: bad kind");
}

Tensor global_eval_with_embedding(const ModelBundle& bundle,
                                  const Tensor& embedding,
                                  const Tensor& meta_X, const Tensor& other_X) {
  Tensor emb = embedding;
  if (emb.rows() == 1 && other_X.rows() > 1) {
    emb = broadcast_rows(emb, other_X.rows());
  }
  std::vector<Tensor> parts;
  if (bundle.meta_arch.kind == MetaBlockKind::kNone) {
    parts = {meta_X, other_X};
  } else {
    parts.push_back(emb);
    if (bundle.feed_meta_to_global) parts.push_back(meta_X);
    parts.push_back(other_X);
  }
  return eval_mlp(bundle.global_spec, bundle.theta_global, concat_cols(parts));
}

Tensor bundle_eval(const ModelBundle& bundle, const ParamSet& theta_meta,
                   const std::string& task_key, const Tensor& meta_X,
                   const Tensor& other_X) {
  if (bundle.meta_arch.kind == MetaBlockKind::kNone) {
    return global_eval_with_embedding(bundle, Tensor(), meta_X, other_X);
  }
  const Tensor emb = meta_block_eval(bundle, theta_meta, task_key, meta_X);
  return global_eval_with_embedding(bundle, emb, meta_X, other_X);
}

ParamSet combined_params(const ModelBundle& bundle) {
  ParamSet out;
  for (const auto& [name, t] : bundle.theta_meta) out.insert("meta/" + name, t);
  for (const auto& [name, t] : bundle.theta_global) {
    out.insert("global/" + name, t);
  }
  return out;
}

void assign_combined(ModelBundle& bundle, const ParamSet& combined) {
  for (const auto& [name, t] : combined) {
    if (name.starts_with("meta/")) {
      bundle.theta_meta.at(name.substr(5)) = t;
    } else if (name.starts_with("global/")) {
      bundle.theta_global.at(name.substr(7)) = t;
    } else {
      throw std::invalid_argument("assign_combined: unexpected entry '" +
                                  name + "'");
    }
  }
}

}  // namespace metarec
