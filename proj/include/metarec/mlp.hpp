// Fully connected feed-forward networks over the computation graph, plus a
// graph-free evaluation path used by serving.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metarec/params.hpp"
#include "metarec/util.hpp"

namespace metarec {

enum class Activation : std::uint8_t {
  kIdentity,
  kRelu,
  kTanh,
  kSigmoid,
};

enum class Mode : std::uint8_t { kTrain, kEval };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct MlpSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> layer_widths;
  std::vector<Activation> activations;   // one per layer
  std::vector<double> dropout;           // per layer, empty = none

  std::size_t layer_count() const { return layer_widths.size(); }
  std::size_t output_dim() const { return layer_widths.back(); }
  // Throws std::invalid_argument on malformed specs (no layers, zero
  // widths, activation count mismatch, dropout outside [0,1)).
  void validate() const;
  // Classifier networks must end in a sigmoid unit.
  bool is_classifier() const {
    return !activations.empty() && activations.back() == Activation::kSigmoid;
  }
  // Copy with every non-final layer's dropout set to `rate`.
  MlpSpec with_dropout(double rate) const;

  bool operator==(const MlpSpec&) const = default;
};

// Layer parameters are named "L<idx>.W" / "L<idx>.b" with a zero-padded
// index, which keeps flatten order weight-before-bias per layer.
std::string layer_weight_name(std::size_t layer);
std::string layer_bias_name(std::size_t layer);

// Uniform +/- sqrt(6/(fan_in+fan_out)) weights, zero biases.
ParamSet init_mlp_params(const MlpSpec& spec, std::uint64_t seed);

// Batched forward pass: input is batch x input_dim, output batch x out.
// In train mode, layers with a positive dropout rate draw an inverted
// (1/(1-p)-scaled) mask from rng; eval mode never touches rng.
Var forward_mlp(const MlpSpec& spec, const ParamVars& params, const Var& input,
                Mode mode = Mode::kEval, Rng* rng = nullptr);

// Single-sample convenience wrapper (input length input_dim).
Var forward_mlp(const MlpSpec& spec, const ParamVars& params,
                const std::vector<double>& input, Mode mode = Mode::kEval,
                Rng* rng = nullptr);

// Graph-free forward pass; always eval mode. This is the only scoring path
// serving links against, so scoring can never run gradient code.
Tensor eval_mlp(const MlpSpec& spec, const ParamSet& params, const Tensor& input);

}  // namespace metarec
