#include "metarec/graph.hpp"

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace metarec {

Node::~Node() {
  // Unrolled inner loops produce long parent chains; steal descendants into
  // a worklist so shared_ptr release never recurses deeply.
  std::vector<Var> work;
  work.swap(parents);
  while (!work.empty()) {
    Var v = std::move(work.back());
    work.pop_back();
    Node* n = v.node();
    if (n != nullptr && v.use_count() == 1) {
      for (Var& p : n->parents) work.push_back(std::move(p));
      n->parents.clear();
    }
  }
}

Var make_op(OpTag op, Tensor value, std::vector<Var> parents) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->requires_grad = false;
  for (const Var& p : parents) {
    if (p.requires_grad()) node->requires_grad = true;
  }
  node->parents = std::move(parents);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value) {
  Var v = make_op(OpTag::kLeaf, std::move(value), {});
  v.node_->requires_grad = true;
  return v;
}

Var Var::constant(Tensor value) {
  return make_op(OpTag::kConstant, std::move(value), {});
}

Var add(const Var& a, const Var& b) {
  return make_op(OpTag::kAdd, add(a.value(), b.value()), {a, b});
}

Var sub(const Var& a, const Var& b) {
  return make_op(OpTag::kSub, sub(a.value(), b.value()), {a, b});
}

Var neg(const Var& a) { return make_op(OpTag::kNeg, neg(a.value()), {a}); }

Var mul(const Var& a, const Var& b) {
  return make_op(OpTag::kMul, mul(a.value(), b.value()), {a, b});
}

Var div(const Var& a, const Var& b) {
  return make_op(OpTag::kDiv, div(a.value(), b.value()), {a, b});
}

Var scale(const Var& a, double c) {
  Var v = make_op(OpTag::kScale, scale(a.value(), c), {a});
  v.node()->aux0 = c;
  return v;
}

Var matmul(const Var& a, const Var& b) {
  return make_op(OpTag::kMatmul, matmul(a.value(), b.value()), {a, b});
}

Var transpose(const Var& a) {
  return make_op(OpTag::kTranspose, transpose(a.value()), {a});
}

Var add_rowvec(const Var& m, const Var& r) {
  return make_op(OpTag::kAddRowVector, add_rowvec(m.value(), r.value()),
                 {m, r});
}

Var sum_rows(const Var& m) {
  return make_op(OpTag::kSumRows, sum_rows(m.value()), {m});
}

Var broadcast_rows(const Var& r, std::size_t n) {
  return make_op(OpTag::kBroadcastRows, broadcast_rows(r.value(), n), {r});
}

Var sum_all(const Var& m) {
  return make_op(OpTag::kSumAll, sum_all(m.value()), {m});
}

Var broadcast_scalar(const Var& s, std::size_t rows, std::size_t cols) {
  return make_op(OpTag::kBroadcastScalar,
                 broadcast_scalar(s.value(), rows, cols), {s});
}

Var sigmoid(const Var& a) {
  return make_op(OpTag::kSigmoid, map_sigmoid(a.value()), {a});
}

Var tanh_act(const Var& a) {
  return make_op(OpTag::kTanh, map_tanh(a.value()), {a});
}

Var relu(const Var& a) {
  return make_op(OpTag::kRelu, map_relu(a.value()), {a});
}

Var log_op(const Var& a) {
  return make_op(OpTag::kLog, map_log(a.value()), {a});
}

Var clamp(const Var& a, double lo, double hi) {
  Var v = make_op(OpTag::kClamp, map_clamp(a.value(), lo, hi), {a});
  v.node()->aux0 = lo;
  v.node()->aux1 = hi;
  return v;
}

Var concat_cols(const std::vector<Var>& parts) {
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  return make_op(OpTag::kConcatCols, concat_cols(values), parts);
}

Var slice_cols(const Var& m, std::size_t begin, std::size_t width) {
  Var v = make_op(OpTag::kSliceCols, slice_cols(m.value(), begin, width), {m});
  v.node()->idx0 = begin;
  v.node()->idx1 = width;
  return v;
}

Var embed_cols(const Var& m, std::size_t total, std::size_t begin) {
  Var v = make_op(OpTag::kEmbedCols, embed_cols(m.value(), total, begin), {m});
  v.node()->idx0 = begin;
  v.node()->idx1 = total;
  return v;
}

Var inner_update(const Var& param, const Var& grad, double step_size) {
  Var v = make_op(OpTag::kInnerUpdate,
                  sub(param.value(), scale(grad.value(), step_size)),
                  {param, grad});
  v.node()->aux0 = step_size;
  return v;
}

namespace {

Var ones_like(const Var& v) {
  return Var::constant(Tensor(v.rows(), v.cols(), 1.0));
}

// Pushes the contribution of `out`'s gradient to each parent.
template <typename Accumulate>
void backprop_step(const Var& out, const Var& g, Accumulate&& accumulate) {
  const std::vector<Var>& ps = out.node()->parents;
  switch (out.op()) {
    case OpTag::kLeaf:
    case OpTag::kConstant:
      break;
    case OpTag::kAdd:
      accumulate(ps[0], g);
      accumulate(ps[1], g);
      break;
    case OpTag::kSub:
      accumulate(ps[0], g);
      accumulate(ps[1], neg(g));
      break;
    case OpTag::kNeg:
      accumulate(ps[0], neg(g));
      break;
    case OpTag::kMul:
      accumulate(ps[0], mul(g, ps[1]));
      accumulate(ps[1], mul(g, ps[0]));
      break;
    case OpTag::kDiv:
      accumulate(ps[0], div(g, ps[1]));
      accumulate(ps[1], neg(div(mul(g, ps[0]), mul(ps[1], ps[1]))));
      break;
    case OpTag::kScale:
      accumulate(ps[0], scale(g, out.node()->aux0));
      break;
    case OpTag::kMatmul:
      accumulate(ps[0], matmul(g, transpose(ps[1])));
      accumulate(ps[1], matmul(transpose(ps[0]), g));
      break;
    case OpTag::kTranspose:
      accumulate(ps[0], transpose(g));
      break;
    case OpTag::kAddRowVector:
      accumulate(ps[0], g);
      accumulate(ps[1], sum_rows(g));
      break;
    case OpTag::kSumRows:
      accumulate(ps[0], broadcast_rows(g, ps[0].rows()));
      break;
    case OpTag::kBroadcastRows:
      accumulate(ps[0], sum_rows(g));
      break;
    case OpTag::kSumAll:
      accumulate(ps[0], broadcast_scalar(g, ps[0].rows(), ps[0].cols()));
      break;
    case OpTag::kBroadcastScalar:
      accumulate(ps[0], sum_all(g));
      break;
    case OpTag::kSigmoid:
      accumulate(ps[0], mul(mul(g, out), sub(ones_like(out), out)));
      break;
    case OpTag::kTanh:
      accumulate(ps[0], mul(g, sub(ones_like(out), mul(out, out))));
      break;
    case OpTag::kRelu: {
      Tensor mask(out.rows(), out.cols());
      const Tensor& in = ps[0].value();
      for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = in[i] > 0.0 ? 1.0 : 0.0;
      }
      accumulate(ps[0], mul(g, Var::constant(std::move(mask))));
      break;
    }
    case OpTag::kLog:
      accumulate(ps[0], div(g, ps[0]));
      break;
    case OpTag::kClamp: {
      Tensor mask(out.rows(), out.cols());
      const Tensor& in = ps[0].value();
      const double lo = out.node()->aux0;
      const double hi = out.node()->aux1;
      for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = (in[i] >= lo && in[i] <= hi) ? 1.0 : 0.0;
      }
      accumulate(ps[0], mul(g, Var::constant(std::move(mask))));
      break;
    }
    case OpTag::kConcatCols: {
      std::size_t off = 0;
      for (const Var& p : ps) {
        accumulate(p, slice_cols(g, off, p.cols()));
        off += p.cols();
      }
      break;
    }
    case OpTag::kSliceCols:
      accumulate(ps[0], embed_cols(g, ps[0].cols(), out.node()->idx0));
      break;
    case OpTag::kEmbedCols:
      accumulate(ps[0], slice_cols(g, out.node()->idx0, ps[0].cols()));
      break;
    case OpTag::kInnerUpdate:
      accumulate(ps[0], g);
      accumulate(ps[1], scale(g, -out.node()->aux0));
      break;
  }
}

// Iterative post-order DFS over the requires_grad subgraph.
std::vector<Var> topo_order(const Var& root) {
  std::vector<Var> order;
  if (!root.requires_grad()) return order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Var, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [var, next_child] = stack.back();
    const std::vector<Var>& ps = var.node()->parents;
    bool descended = false;
    while (next_child < ps.size()) {
      const Var& p = ps[next_child++];
      if (p.requires_grad() && visited.insert(p.node()).second) {
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && next_child >= ps.size()) {
      order.push_back(var);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

std::vector<Var> grad(const Var& loss, const std::vector<Var>& wrt) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw std::invalid_argument("grad: loss must be a defined scalar node");
  }
  std::unordered_map<Node*, Var> acc;
  const std::vector<Var> order = topo_order(loss);
  if (!order.empty()) {
    acc.emplace(loss.node(), Var::constant(Tensor::scalar(1.0)));
    auto accumulate = [&acc](const Var& parent, const Var& g) {
      if (!parent.requires_grad()) return;
      auto it = acc.find(parent.node());
      if (it == acc.end()) {
        acc.emplace(parent.node(), g);
      } else {
        it->second = add(it->second, g);
      }
    };
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      auto gi = acc.find(it->node());
      if (gi == acc.end()) continue;
      backprop_step(*it, gi->second, accumulate);
    }
  }
  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto it = acc.find(w.node());
    if (it != acc.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(Var::constant(Tensor(w.rows(), w.cols(), 0.0)));
    }
  }
  return out;
}

}  // namespace metarec
