#include "metarec/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace metarec {

double cross_entropy(double prediction, int label) {
  if (label != 0 && label != 1) {
    throw std::invalid_argument("cross_entropy: label must be 0 or 1, got " +
                                std::to_string(label));
  }
  double p = prediction;
  if (p < kProbClamp) p = kProbClamp;
  if (p > 1.0 - kProbClamp) p = 1.0 - kProbClamp;
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

Var bce_mean(const Var& predictions, const std::vector<int>& labels) {
  const std::size_t m = predictions.rows();
  if (predictions.cols() != 1) {
    throw std::invalid_argument("bce_mean: predictions must be a column");
  }
  if (labels.size() != m || m == 0) {
    throw std::invalid_argument("bce_mean: need one label per prediction");
  }
  Tensor y(m, 1);
  Tensor y_flip(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("bce_mean: label must be 0 or 1 at row " +
                                  std::to_string(i));
    }
    y[i] = static_cast<double>(labels[i]);
    y_flip[i] = 1.0 - y[i];
  }
  const Var p = clamp(predictions, kProbClamp, 1.0 - kProbClamp);
  const Var ones = Var::constant(Tensor(m, 1, 1.0));
  const Var pos = mul(Var::constant(std::move(y)), log_op(p));
  const Var neg_term = mul(Var::constant(std::move(y_flip)), log_op(sub(ones, p)));
  const Var total = sum_all(add(pos, neg_term));
  return scale(neg(total), 1.0 / static_cast<double>(m));
}

}  // namespace metarec
