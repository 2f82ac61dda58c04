#include "metarec/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metarec {

namespace {

template <typename Entries>
auto find_entry(Entries& entries, const std::string& name) {
  auto it = std::lower_bound(
      entries.begin(), entries.end(), name,
      [](const auto& e, const std::string& n) { return e.first < n; });
  return it;
}

}  // namespace

void ParamSet::insert(std::string name, Tensor value) {
  auto it = find_entry(entries_, name);
  if (it != entries_.end() && it->first == name) {
    throw std::invalid_argument("ParamSet: duplicate entry '" + name + "'");
  }
  entries_.emplace(it, std::move(name), std::move(value));
}

bool ParamSet::contains(const std::string& name) const {
  auto it = find_entry(entries_, name);
  return it != entries_.end() && it->first == name;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = find_entry(entries_, name);
  if (it == entries_.end() || it->first != name) {
    throw std::out_of_range("ParamSet: no entry '" + name + "'");
  }
  return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = find_entry(entries_, name);
  if (it == entries_.end() || it->first != name) {
    throw std::out_of_range("ParamSet: no entry '" + name + "'");
  }
  return it->second;
}

std::size_t ParamSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

bool ParamSet::all_finite() const {
  for (const auto& [name, t] : entries_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

bool ParamSet::same_structure(const ParamSet& o) const {
  if (entries_.size() != o.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != o.entries_[i].first) return false;
    if (!entries_[i].second.same_shape(o.entries_[i].second)) return false;
  }
  return true;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_elements());
  for (const auto& [name, t] : entries_) {
    out.insert(out.end(), t.values().begin(), t.values().end());
  }
  return out;
}

ParamSet ParamSet::unflatten(const std::vector<double>& flat,
                             const ParamSet& shapes) {
  if (flat.size() != shapes.total_elements()) {
    throw std::invalid_argument(
        "ParamSet::unflatten: expected " +
        std::to_string(shapes.total_elements()) + " values, got " +
        std::to_string(flat.size()));
  }
  ParamSet out;
  std::size_t off = 0;
  for (const auto& [name, t] : shapes) {
    std::vector<double> chunk(flat.begin() + off, flat.begin() + off + t.size());
    out.insert(name, Tensor::from_rows(t.rows(), t.cols(), std::move(chunk)));
    off += t.size();
  }
  return out;
}

double ParamSet::global_norm() const {
  double s = 0.0;
  for (const auto& [name, t] : entries_) {
    for (double x : t.values()) s += x * x;
  }
  return std::sqrt(s);
}

ParamSet add(const ParamSet& a, const ParamSet& b) {
  if (!a.same_structure(b)) {
    throw std::invalid_argument("ParamSet add: structure mismatch");
  }
  ParamSet out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.insert(a.entry(i).first, add(a.entry(i).second, b.entry(i).second));
  }
  return out;
}

ParamSet scale(const ParamSet& a, double c) {
  ParamSet out;
  for (const auto& [name, t] : a) out.insert(name, scale(t, c));
  return out;
}

ParamSet zeros_like(const ParamSet& a) {
  ParamSet out;
  for (const auto& [name, t] : a) out.insert(name, Tensor(t.rows(), t.cols()));
  return out;
}

ParamVars ParamVars::leaves(const ParamSet& values) {
  ParamVars out;
  for (const auto& [name, t] : values) {
    out.entries_.emplace_back(name, Var::leaf(t));
  }
  return out;
}

ParamVars ParamVars::constants(const ParamSet& values) {
  ParamVars out;
  for (const auto& [name, t] : values) {
    out.entries_.emplace_back(name, Var::constant(t));
  }
  return out;
}

void ParamVars::insert(std::string name, Var v) {
  auto it = find_entry(entries_, name);
  if (it != entries_.end() && it->first == name) {
    throw std::invalid_argument("ParamVars: duplicate entry '" + name + "'");
  }
  entries_.emplace(it, std::move(name), std::move(v));
}

bool ParamVars::contains(const std::string& name) const {
  auto it = find_entry(entries_, name);
  return it != entries_.end() && it->first == name;
}

const Var& ParamVars::at(const std::string& name) const {
  auto it = find_entry(entries_, name);
  if (it == entries_.end() || it->first != name) {
    throw std::out_of_range("ParamVars: no entry '" + name + "'");
  }
  return it->second;
}

std::vector<Var> ParamVars::vars() const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& [name, v] : entries_) out.push_back(v);
  return out;
}

ParamSet ParamVars::values() const {
  ParamSet out;
  for (const auto& [name, v] : entries_) out.insert(name, v.value());
  return out;
}

ParamVars grad(const Var& loss, const ParamVars& wrt) {
  std::vector<Var> gs = grad(loss, wrt.vars());
  ParamVars out;
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    out.insert(wrt.entry(i).first, gs[i]);
  }
  return out;
}

}  // namespace metarec
