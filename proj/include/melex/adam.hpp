#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "melex/common.hpp"
#include "melex/params.hpp"

namespace melex {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, shaped like the parameter store.
template <typename Real>
struct AdamState {
  ParamStore<Real> m;
  ParamStore<Real> v;
  std::uint64_t t = 0;

  static AdamState like(const ParamStore<Real>& params) {
    AdamState st;
    for (const auto& [name, tensor] : params) {
      st.m.add(name, Tensor<Real>(tensor.shape()));
      st.v.add(name, Tensor<Real>(tensor.shape()));
    }
    return st;
  }
};

// Standard bias-corrected update. Gradients are ordered like the store;
// a non-finite gradient aborts the step before any parameter changes.
template <typename Real>
void adam_step(ParamStore<Real>& params, const std::vector<Tensor<Real>>& grads,
               AdamState<Real>& state, const AdamConfig& cfg) {
  std::size_t i = 0;
  for (const auto& [name, tensor] : params) {
    if (i >= grads.size() || grads[i].size() != tensor.size()) {
      throw ValidationError(format_msg("adam_step: gradient ", i, " does not match ", name));
    }
    if (!grads[i].all_finite()) {
      throw NumericError(format_msg("adam_step: non-finite gradient for ", name));
    }
    ++i;
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  i = 0;
  for (auto& [name, tensor] : params) {
    Tensor<Real>& m = state.m.at(name);
    Tensor<Real>& v = state.v.at(name);
    const Tensor<Real>& g = grads[i++];
    const std::size_t n = tensor.size();
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = cfg.beta1 * static_cast<double>(m[j]) + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * static_cast<double>(v[j]) + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<Real>(mj);
      v[j] = static_cast<Real>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      tensor[j] = static_cast<Real>(static_cast<double>(tensor[j]) -
                                    cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace melex
