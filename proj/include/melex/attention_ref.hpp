#pragma once

#include <cmath>
#include <vector>

#include "melex/common.hpp"
#include "melex/tensor.hpp"

namespace melex {

// Plain single-head self-attention layer used as the quadratic-cost
// reference in the complexity benchmark. Forward only, no autodiff.
class AttentionRef {
 public:
  AttentionRef(std::size_t d_model, std::uint64_t seed) : d_(d_model) {
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_model));
    for (auto* w : {&wq_, &wk_, &wv_, &wo_}) {
      *w = Tensor<float>({d_, d_});
      w->fill_uniform(rng, -bound, bound);
    }
  }

  // x: (T, d) -> (T, d); cost dominated by the T x T score matrix.
  Tensor<float> forward(const Tensor<float>& x) const {
    const std::size_t T = x.rows();
    Tensor<float> q = project(x, wq_), k = project(x, wk_), v = project(x, wv_);
    const float scale = 1.0f / std::sqrt(static_cast<float>(d_));
    std::vector<float> scores(T);
    Tensor<float> ctx({T, d_});
    for (std::size_t i = 0; i < T; ++i) {
      const float* qi = q.row(i);
      float mx = -1e30f;
      for (std::size_t j = 0; j < T; ++j) {
        const float* kj = k.row(j);
        float acc = 0;
        for (std::size_t c = 0; c < d_; ++c) acc += qi[c] * kj[c];
        scores[j] = acc * scale;
        mx = std::max(mx, scores[j]);
      }
      float denom = 0;
      for (std::size_t j = 0; j < T; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        denom += scores[j];
      }
      const float inv = 1.0f / denom;
      float* out = ctx.row(i);
      for (std::size_t j = 0; j < T; ++j) {
        const float w = scores[j] * inv;
        const float* vj = v.row(j);
        for (std::size_t c = 0; c < d_; ++c) out[c] += w * vj[c];
      }
    }
    return project(ctx, wo_);
  }

 private:
  Tensor<float> project(const Tensor<float>& x, const Tensor<float>& w) const {
    const std::size_t T = x.rows();
    Tensor<float> y({T, d_});
    for (std::size_t i = 0; i < T; ++i) {
      const float* xr = x.row(i);
      float* o = y.row(i);
      for (std::size_t kk = 0; kk < d_; ++kk) {
        const float xv = xr[kk];
        const float* wr = w.row(kk);
        for (std::size_t j = 0; j < d_; ++j) o[j] += xv * wr[j];
      }
    }
    return y;
  }

  std::size_t d_;
  Tensor<float> wq_, wk_, wv_, wo_;
};

}  // namespace melex
