// Reverse-mode computation graph over Tensor values.
//
// Backward passes are themselves built from graph operations, so the output
// of grad() stays differentiable. Calling grad() on an expression that
// contains earlier grad() results yields exact higher-order derivatives;
// this is what lets a query loss be differentiated through unrolled inner
// gradient-update steps.
//
// Graphs are DAGs of shared_ptr nodes; a node never mutates its parents and
// gradient accumulators live inside each grad() call, so concurrent
// read-only use of shared subgraphs (e.g. one parameter leaf referenced by
// many per-task graphs) is safe.
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "metarec/tensor.hpp"

namespace metarec {

enum class OpTag : std::uint8_t {
  kLeaf,
  kConstant,
  kAdd,
  kSub,
  kNeg,
  kMul,
  kDiv,
  kScale,
  kMatmul,
  kTranspose,
  kAddRowVector,
  kSumRows,
  kBroadcastRows,
  kSumAll,
  kBroadcastScalar,
  kSigmoid,
  kTanh,
  kRelu,
  kLog,
  kClamp,
  kConcatCols,
  kSliceCols,
  kEmbedCols,
  kInnerUpdate,  // theta' = theta - step_size * grad; records step_size
};

class Var;

struct Node {
  Tensor value;
  OpTag op = OpTag::kConstant;
  std::vector<Var> parents;
  // Op payload: kScale/kInnerUpdate use aux0 (scale factor / step size);
  // kClamp uses aux0/aux1 as bounds; kSliceCols/kEmbedCols use idx0/idx1
  // as (begin, width/total).
  double aux0 = 0.0;
  double aux1 = 0.0;
  std::size_t idx0 = 0;
  std::size_t idx1 = 0;
  bool requires_grad = false;

  ~Node();  // iterative teardown; deep chains must not recurse
};

// Value-semantics handle to a graph node.
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor value);
  static Var constant(Tensor value);
  static Var constant_scalar(double value) {
    return constant(Tensor::scalar(value));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  OpTag op() const { return node_->op; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node* node() const { return node_.get(); }
  long use_count() const { return node_.use_count(); }
  bool same_node(const Var& o) const { return node_ == o.node_; }

 private:
  friend Var make_op(OpTag, Tensor, std::vector<Var>);
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;
};

// Graph-building operations. Shapes are validated eagerly;
// std::invalid_argument carries the offending shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_rowvec(const Var& m, const Var& r);
Var sum_rows(const Var& m);
Var broadcast_rows(const Var& r, std::size_t n);
Var sum_all(const Var& m);
Var broadcast_scalar(const Var& s, std::size_t rows, std::size_t cols);
Var sigmoid(const Var& a);
Var tanh_act(const Var& a);
Var relu(const Var& a);
Var log_op(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& m, std::size_t begin, std::size_t width);
Var embed_cols(const Var& m, std::size_t total, std::size_t begin);
Var inner_update(const Var& param, const Var& grad, double step_size);

// Reverse-mode gradients of a scalar loss with respect to each entry of
// wrt. Entries not reachable from the loss get a zero constant. The
// returned Vars are graph-connected, so second-order gradients follow from
// calling grad() again on expressions built from them.
std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt);

}  // namespace metarec
