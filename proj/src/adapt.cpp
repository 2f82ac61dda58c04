#include "metarec/adapt.hpp"

#include <stdexcept>
#include <string>

namespace metarec {

AdaptResult unrolled_adapt(const ParamVars& params, const LossFn& loss_fn,
                           double alpha, int steps) {
  if (steps < 0) {
    throw std::invalid_argument("unrolled_adapt: steps must be >= 0");
  }
  AdaptResult result;
  result.adapted = params;
  result.graph_connected = false;
  for (int s = 0; s < steps; ++s) {
    const Var loss = loss_fn(result.adapted);
    const ParamVars g = grad(loss, result.adapted);
    ParamVars next;
    for (std::size_t i = 0; i < result.adapted.size(); ++i) {
      const auto& [name, p] = result.adapted.entry(i);
      const Var& gi = g.at(name);
      if (!gi.value().all_finite()) {
        throw std::runtime_error("unrolled_adapt: non-finite gradient for '" +
                                 name + "' at inner step " + std::to_string(s));
      }
      next.insert(name, inner_update(p, gi, alpha));
    }
    result.adapted = std::move(next);
    result.graph_connected = true;
  }
  return result;
}

MetaGradient meta_gradient(const ParamVars& params,
                           const LossFn& support_loss_fn,
                           const LossFn& query_loss_fn, double alpha,
                           int steps) {
  const AdaptResult adapted =
      unrolled_adapt(params, support_loss_fn, alpha, steps);
  const Var query_loss = query_loss_fn(adapted.adapted);
  MetaGradient out;
  out.query_loss = query_loss.value()[0];
  out.grads = grad(query_loss, params).values();
  return out;
}

LossFn mlp_batch_loss(const MlpSpec& spec, const Batch& batch, Mode mode,
                      Rng* rng) {
  if (batch.features.rows() != batch.labels.size()) {
    throw std::invalid_argument("mlp_batch_loss: feature/label count mismatch");
  }
  return [spec, batch, mode, rng](const ParamVars& p) {
    const Var out =
        forward_mlp(spec, p, Var::constant(batch.features), mode, rng);
    return bce_mean(out, batch.labels);
  };
}

AdaptResult unrolled_adapt_mlp(const MlpSpec& spec, const ParamVars& params,
                               const Batch& support, double alpha, int steps) {
  if (steps > 0 && support.size() == 0) {
    throw std::invalid_argument("unrolled_adapt_mlp: empty support set");
  }
  return unrolled_adapt(params, mlp_batch_loss(spec, support), alpha, steps);
}

MetaGradient meta_gradient_mlp(const MlpSpec& spec, const ParamVars& params,
                               const Batch& support, const Batch& query,
                               double alpha, int steps) {
  if (query.size() == 0) {
    throw std::invalid_argument("meta_gradient_mlp: empty query set");
  }
  if (steps > 0 && support.size() == 0) {
    throw std::invalid_argument("meta_gradient_mlp: empty support set");
  }
  return meta_gradient(params, mlp_batch_loss(spec, support),
                       mlp_batch_loss(spec, query), alpha, steps);
}

}  // namespace metarec
