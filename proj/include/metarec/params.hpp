// Named parameter collections: ParamSet holds plain tensors (the persisted
// form), ParamVars holds graph nodes over the same names (the trainable
// view). Entries are kept sorted by name so flatten order is deterministic.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "metarec/graph.hpp"
#include "metarec/tensor.hpp"

namespace metarec {

class ParamSet {
 public:
  ParamSet() = default;

  // Inserts keeping name order; duplicate names rejected.
  void insert(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::pair<std::string, Tensor>& entry(std::size_t i) const {
    return entries_[i];
  }
  std::pair<std::string, Tensor>& entry(std::size_t i) { return entries_[i]; }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t total_elements() const;
  bool all_finite() const;
  bool same_structure(const ParamSet& o) const;
  bool operator==(const ParamSet& o) const { return entries_ == o.entries_; }

  // Flatten concatenates entries in name order, each row-major.
  std::vector<double> flatten() const;
  // Rebuilds values into a structurally identical set; length mismatch throws.
  static ParamSet unflatten(const std::vector<double>& flat,
                            const ParamSet& shapes);

  double global_norm() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Elementwise arithmetic over structurally identical sets.
ParamSet add(const ParamSet& a, const ParamSet& b);
ParamSet scale(const ParamSet& a, double c);
ParamSet zeros_like(const ParamSet& a);

class ParamVars {
 public:
  ParamVars() = default;

  // Lifts every tensor into a leaf node (trainable view).
  static ParamVars leaves(const ParamSet& values);
  // Wraps every tensor as a constant (frozen view).
  static ParamVars constants(const ParamSet& values);

  void insert(std::string name, Var v);
  bool contains(const std::string& name) const;
  const Var& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::pair<std::string, Var>& entry(std::size_t i) const {
    return entries_[i];
  }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::vector<Var> vars() const;
  ParamSet values() const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

// Gradient of a scalar loss for each entry of wrt (zeros when unreachable).
// Result entries stay graph-connected for higher-order differentiation.
ParamVars grad(const Var& loss, const ParamVars& wrt);

}  // namespace metarec
