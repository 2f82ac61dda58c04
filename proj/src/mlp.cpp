#include "metarec/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace metarec {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::kIdentity;
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  if (s == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

void MlpSpec::validate() const {
  if (input_dim == 0) {
    throw std::invalid_argument("MlpSpec: input_dim must be positive");
  }
  if (layer_widths.empty()) {
    throw std::invalid_argument("MlpSpec: at least one layer required");
  }
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (layer_widths[i] == 0) {
      throw std::invalid_argument("MlpSpec: layer " + std::to_string(i) +
                                  " has zero width");
    }
  }
  if (activations.size() != layer_widths.size()) {
    throw std::invalid_argument("MlpSpec: need one activation per layer");
  }
  if (!dropout.empty() && dropout.size() != layer_widths.size()) {
    throw std::invalid_argument("MlpSpec: dropout list length mismatch");
  }
  for (double r : dropout) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw std::invalid_argument("MlpSpec: dropout rate must be in [0,1)");
    }
  }
}

MlpSpec MlpSpec::with_dropout(double rate) const {
  MlpSpec out = *this;
  out.dropout.assign(layer_widths.size(), rate);
  out.dropout.back() = 0.0;
  return out;
}

std::string layer_weight_name(std::size_t layer) {
  const std::string idx = std::to_string(layer);
  return "L" + std::string(idx.size() < 2 ? 2 - idx.size() : 0, '0') + idx +
         ".W";
}

std::string layer_bias_name(std::size_t layer) {
  const std::string idx = std::to_string(layer);
  return "L" + std::string(idx.size() < 2 ? 2 - idx.size() : 0, '0') + idx +
         ".b";
}

ParamSet init_mlp_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamSet out;
  Rng rng(seed);
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t fan_out = spec.layer_widths[l];
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(fan_in, fan_out);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = rng.uniform(-bound, bound);
    }
    out.insert(layer_weight_name(l), std::move(w));
    out.insert(layer_bias_name(l), Tensor(1, fan_out, 0.0));
    fan_in = fan_out;
  }
  return out;
}

namespace {

Var apply_activation(const Var& x, Activation a) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh_act(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

Var apply_dropout(const Var& x, double rate, Mode mode, Rng* rng,
                  std::size_t layer) {
  if (mode == Mode::kEval || rate == 0.0) return x;
  if (rng == nullptr) {
    throw std::invalid_argument("forward_mlp: dropout on layer " +
                                std::to_string(layer) + " needs an rng");
  }
  Tensor mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng->uniform() < rate ? 0.0 : keep_scale;
  }
  return mul(x, Var::constant(std::move(mask)));
}

}  // namespace

Var forward_mlp(const MlpSpec& spec, const ParamVars& params, const Var& input,
                Mode mode, Rng* rng) {
  spec.validate();
  if (input.cols() != spec.input_dim) {
    throw std::invalid_argument(
        "forward_mlp: input width " + std::to_string(input.cols()) +
        " does not match layer 0 input dim " + std::to_string(spec.input_dim));
  }
  if (!input.value().all_finite()) {
    throw std::invalid_argument("forward_mlp: non-finite input");
  }
  Var h = input;
  std::size_t fan_in = spec.input_dim;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const Var& w = params.at(layer_weight_name(l));
    const Var& b = params.at(layer_bias_name(l));
    if (w.rows() != fan_in || w.cols() != spec.layer_widths[l] ||
        b.cols() != spec.layer_widths[l]) {
      throw std::invalid_argument("forward_mlp: parameter shape mismatch at layer " +
                                  std::to_string(l));
    }
    h = add_rowvec(matmul(h, w), b);
    h = apply_activation(h, spec.activations[l]);
    if (!spec.dropout.empty()) {
      h = apply_dropout(h, spec.dropout[l], mode, rng, l);
    }
    fan_in = spec.layer_widths[l];
  }
  return h;
}

Var forward_mlp(const MlpSpec& spec, const ParamVars& params,
                const std::vector<double>& input, Mode mode, Rng* rng) {
  return forward_mlp(spec, params, Var::constant(Tensor::row_vector(input)),
                     mode, rng);
}

Tensor eval_mlp(const MlpSpec& spec, const ParamSet& params,
                const Tensor& input) {
  Tensor h = input;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    h = add_rowvec(matmul(h, params.at(layer_weight_name(l))),
                   params.at(layer_bias_name(l)));
    switch (spec.activations[l]) {
      case Activation::kIdentity: break;
      case Activation::kRelu: h = map_relu(h); break;
      case Activation::kTanh: h = map_tanh(h); break;
      case Activation::kSigmoid: h = map_sigmoid(h); break;
    }
  }
  return h;
}

}  // namespace metarec
