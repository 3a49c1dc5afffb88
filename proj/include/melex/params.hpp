#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "melex/common.hpp"
#include "melex/graph.hpp"
#include "melex/tensor.hpp"

namespace melex {

// Named parameter tensors with stable (insertion) order, so checkpointing and
// gradient accumulation are deterministic.
template <typename Real>
class ParamStore {
 public:
  Tensor<Real>& add(const std::string& name, Tensor<Real> t) {
    if (index_.count(name)) throw ValidationError(format_msg("duplicate parameter: ", name));
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<Real>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(format_msg("unknown parameter: ", name));
    return items_[it->second].second;
  }

  const Tensor<Real>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(format_msg("unknown parameter: ", name));
    return items_[it->second].second;
  }

  std::size_t size() const { return items_.size(); }

  std::size_t total_scalars() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, t] : items_) out.add(name, t.template cast<Other>());
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<Real>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// All parameters of a store inserted into one graph as differentiable leaves.
template <typename Real>
class BoundParams {
 public:
  BoundParams(Graph<Real>& g, const ParamStore<Real>& store) : g_(&g) {
    for (const auto& [name, t] : store) {
      index_[name] = vars_.size();
      vars_.emplace_back(name, g.param(t));
    }
  }

  Var<Real> operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(format_msg("unbound parameter: ", name));
    return vars_[it->second].second;
  }

  const std::vector<std::pair<std::string, Var<Real>>>& all() const { return vars_; }

 private:
  Graph<Real>* g_;
  std::vector<std::pair<std::string, Var<Real>>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace melex
