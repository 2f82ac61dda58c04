// Unrolled task adaptation and the meta-gradient through it.
#pragma once

#include <functional>
#include <vector>

#include "metarec/loss.hpp"
#include "metarec/mlp.hpp"
#include "metarec/params.hpp"

namespace metarec {

// Scalar loss as a function of the current parameter view.
using LossFn = std::function<Var(const ParamVars&)>;

struct AdaptResult {
  ParamVars adapted;
  // True when update nodes connect the adapted set back to the originals,
  // i.e. at least one gradient step was unrolled.
  bool graph_connected = false;
};

// Runs `steps` full-batch gradient updates of loss_fn starting from params.
// The adapted parameters stay graph-connected to the originals, so a later
// grad() through them yields the exact second-order meta-gradient. A
// non-finite intermediate gradient aborts with the failing step index.
AdaptResult unrolled_adapt(const ParamVars& params, const LossFn& loss_fn,
                           double alpha, int steps);

// Derivative of query_loss_fn evaluated at the adapted parameters with
// respect to the ORIGINAL params, second-order terms included. Also reports
// the realized query loss.
struct MetaGradient {
  ParamSet grads;
  double query_loss = 0.0;
};
MetaGradient meta_gradient(const ParamVars& params, const LossFn& support_loss_fn,
                           const LossFn& query_loss_fn, double alpha, int steps);

// Labeled feature batch in graph form.
struct Batch {
  Tensor features;          // m x d
  std::vector<int> labels;  // m entries

  std::size_t size() const { return labels.size(); }
};

// Mean cross-entropy of an MLP on a batch (the per-task loss).
LossFn mlp_batch_loss(const MlpSpec& spec, const Batch& batch,
                      Mode mode = Mode::kEval, Rng* rng = nullptr);

// MAML building blocks on MLPs: adapt on the support batch, differentiate
// the query loss back to the original parameters.
AdaptResult unrolled_adapt_mlp(const MlpSpec& spec, const ParamVars& params,
                               const Batch& support, double alpha, int steps);
MetaGradient meta_gradient_mlp(const MlpSpec& spec, const ParamVars& params,
                               const Batch& support, const Batch& query,
                               double alpha, int steps);

}  // namespace metarec
