// Binary cross-entropy with clamped probabilities.
#pragma once

#include <vector>

#include "metarec/graph.hpp"

namespace metarec {

// Predictions are clamped into [kProbClamp, 1 - kProbClamp] before the log,
// bounding the loss at -ln(kProbClamp).
inline constexpr double kProbClamp = 1e-7;

// Minimizable cross-entropy of a single prediction: -(y ln p + (1-y) ln(1-p)).
// Labels outside {0,1} are rejected.
double cross_entropy(double prediction, int label);

// Mean cross-entropy of a column of predictions (m x 1) against labels.
Var bce_mean(const Var& predictions, const std::vector<int>& labels);

}  // namespace metarec
