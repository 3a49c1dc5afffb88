#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "melex/common.hpp"
#include "melex/tensor.hpp"

namespace melex {

template <typename Real>
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over a closed primitive set. Nodes are appended in
// topological order by construction; backward() walks them in reverse.
// A graph instance is single-threaded; distinct graphs are independent.
template <typename Real>
class Graph {
 public:
  explicit Graph(bool grad_enabled = true, bool check_numerics = true)
      : grad_enabled_(grad_enabled), check_numerics_(check_numerics) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var<Real> constant(Tensor<Real> t) { return make_leaf(std::move(t), false, "constant"); }
  Var<Real> param(Tensor<Real> t) { return make_leaf(std::move(t), true, "param"); }

  const Tensor<Real>& val(Var<Real> v) const { return nodes_[check_id(v)].value; }

  bool has_grad(Var<Real> v) const {
    return check_id(v) < static_cast<int>(grads_.size()) && grads_[v.id].size() > 0;
  }

  const Tensor<Real>& grad(Var<Real> v) const {
    check_id(v);
    if (!has_grad(v)) {
      throw ValidationError("graph: gradient not populated for this node (run backward first)");
    }
    return grads_[v.id];
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  // Marks the current node count so everything appended later can be dropped
  // with rollback(); lets inference bind weights once and stream inputs.
  std::size_t mark() const { return nodes_.size(); }

  void rollback(std::size_t mark) {
    if (mark > nodes_.size()) throw ValidationError("graph: rollback past the end");
    nodes_.resize(mark);
    grads_.clear();
  }

  // Reverse sweep from a scalar loss. Gradients from any previous sweep are
  // discarded, so repeated calls are bitwise reproducible.
  void backward(Var<Real> loss) {
    const int lid = check_id(loss);
    if (!nodes_[lid].value.is_scalar()) {
      throw ValidationError(format_msg("backward: seed must be scalar, got shape ",
                                       nodes_[lid].value.shape_str()));
    }
    if (!grad_enabled_) {
      throw ValidationError("backward: graph was built with gradients disabled");
    }
    grads_.assign(nodes_.size(), Tensor<Real>());
    accum_grad(lid, Tensor<Real>::scalar(Real(1)));
    for (int i = lid; i >= 0; --i) {
      if (!nodes_[i].backward) continue;
      if (grads_[i].size() == 0) continue;  // node did not influence the loss
      nodes_[i].backward(*this, grads_[i]);
    }
  }

  // ---- primitives ----

  Var<Real> add(Var<Real> a, Var<Real> b) {
    const Tensor<Real>&A = val(a), &B = val(b);
    require(A.same_shape(B), "add", format_msg("shape mismatch ", A.shape_str(), " vs ", B.shape_str()));
    Tensor<Real> out(A.shape());
    const std::size_t n = A.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i] + B[i];
    return make_node(std::move(out), {a.id, b.id}, "add",
                     [a, b](Graph& g, const Tensor<Real>& go) {
                       if (g.wants_grad(a)) g.accum_grad(a.id, go);
                       if (g.wants_grad(b)) g.accum_grad(b.id, go);
                     });
  }

  Var<Real> mul(Var<Real> a, Var<Real> b) {
    const Tensor<Real>&A = val(a), &B = val(b);
    require(A.same_shape(B), "mul", format_msg("shape mismatch ", A.shape_str(), " vs ", B.shape_str()));
    Tensor<Real> out(A.shape());
    const std::size_t n = A.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = A[i] * B[i];
    return make_node(std::move(out), {a.id, b.id}, "mul",
                     [a, b](Graph& g, const Tensor<Real>& go) {
                       const Tensor<Real>&A2 = g.val(a), &B2 = g.val(b);
                       if (g.wants_grad(a)) {
                         Tensor<Real> ga(A2.shape());
                         for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = go[i] * B2[i];
                         g.accum_grad(a.id, std::move(ga));
                       }
                       if (g.wants_grad(b)) {
                         Tensor<Real> gb(B2.shape());
                         for (std::size_t i = 0; i < gb.size(); ++i) gb[i] = go[i] * A2[i];
                         g.accum_grad(b.id, std::move(gb));
                       }
                     });
  }

  Var<Real> scale(Var<Real> a, Real c) {
    const Tensor<Real>& A = val(a);
    Tensor<Real> out(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * c;
    return make_node(std::move(out), {a.id}, "scale",
                     [a, c](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(a)) return;
                       Tensor<Real> ga(go.shape());
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = go[i] * c;
                       g.accum_grad(a.id, std::move(ga));
                     });
  }

  // y = x W (+ b), applied over the last axis of a 1-D or 2-D x.
  Var<Real> linear(Var<Real> x, Var<Real> w, Var<Real> b = Var<Real>{}) {
    const Tensor<Real>&X = val(x), &W = val(w);
    require(W.ndim() == 2, "linear", format_msg("weight must be 2-D, got ", W.shape_str()));
    const std::size_t m = X.rows(), k = X.cols(), k2 = W.dim(0), n = W.dim(1);
    require(k == k2, "linear",
            format_msg("inner dimensions disagree: x ", X.shape_str(), " vs W ", W.shape_str()));
    const bool has_bias = b.valid();
    if (has_bias) {
      require(val(b).size() == n, "linear",
              format_msg("bias shape ", val(b).shape_str(), " vs W ", W.shape_str()));
    }
    Tensor<Real> out(X.ndim() == 1 ? std::vector<std::size_t>{n}
                                   : std::vector<std::size_t>{m, n});
    const Real* bp = has_bias ? val(b).data() : nullptr;
    for (std::size_t i = 0; i < m; ++i) {
      Real* o = out.data() + i * n;
      if (bp) {
        for (std::size_t j = 0; j < n; ++j) o[j] = bp[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) o[j] = Real(0);
      }
      const Real* xr = X.data() + i * k;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const Real xv = xr[kk];
        const Real* wr = W.data() + kk * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += xv * wr[j];
      }
    }
    std::vector<int> ins = {x.id, w.id};
    if (has_bias) ins.push_back(b.id);
    return make_node(std::move(out), std::move(ins), "linear",
                     [x, w, b, m, k, n, has_bias](Graph& g, const Tensor<Real>& go) {
                       const Tensor<Real>&X2 = g.val(x), &W2 = g.val(w);
                       if (g.wants_grad(x)) {
                         Tensor<Real> gx(X2.shape());
                         // gx = go . W^T via an explicit transpose so the
                         // inner loop is a contiguous axpy
                         std::vector<Real> wt(n * k);
                         for (std::size_t kk = 0; kk < k; ++kk) {
                           const Real* wr = W2.data() + kk * n;
                           for (std::size_t j = 0; j < n; ++j) wt[j * k + kk] = wr[j];
                         }
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* gr = go.data() + i * n;
                           Real* gxr = gx.data() + i * k;
                           for (std::size_t j = 0; j < n; ++j) {
                             const Real gv = gr[j];
                             if (gv == Real(0)) continue;
                             const Real* wtr = wt.data() + j * k;
                             for (std::size_t kk = 0; kk < k; ++kk) gxr[kk] += gv * wtr[kk];
                           }
                         }
                         g.accum_grad(x.id, std::move(gx));
                       }
                       if (g.wants_grad(w)) {
                         Tensor<Real> gw(W2.shape());
                         // gw = X^T . go
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* xr = X2.data() + i * k;
                           const Real* gr = go.data() + i * n;
                           for (std::size_t kk = 0; kk < k; ++kk) {
                             const Real xv = xr[kk];
                             Real* gwr = gw.data() + kk * n;
                             for (std::size_t j = 0; j < n; ++j) gwr[j] += xv * gr[j];
                           }
                         }
                         g.accum_grad(w.id, std::move(gw));
                       }
                       if (has_bias && g.wants_grad(b)) {
                         Tensor<Real> gb(g.val(b).shape());
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* gr = go.data() + i * n;
                           for (std::size_t j = 0; j < n; ++j) gb[j] += gr[j];
                         }
                         g.accum_grad(b.id, std::move(gb));
                       }
                     });
  }

  // Depthwise causal 1-D convolution over time. x is (T, d) time-major,
  // kernel is (w, d), bias (d). Out-of-range samples read as zero, so the
  // output keeps length T. w > T is legal (pure padding).
  Var<Real> conv1d_causal(Var<Real> x, Var<Real> kernel, Var<Real> bias) {
    const Tensor<Real>&X = val(x), &K = val(kernel), &B = val(bias);
    require(X.ndim() == 2 && K.ndim() == 2, "conv1d",
            format_msg("expected 2-D x and kernel, got ", X.shape_str(), " and ", K.shape_str()));
    const std::size_t T = X.dim(0), d = X.dim(1), w = K.dim(0);
    require(w >= 1, "conv1d", "kernel width must be positive");
    require(K.dim(1) == d, "conv1d",
            format_msg("channel mismatch: x ", X.shape_str(), " vs kernel ", K.shape_str()));
    require(B.size() == d, "conv1d",
            format_msg("bias shape ", B.shape_str(), " vs channels ", d));
    Tensor<Real> out({T, d});
    for (std::size_t t = 0; t < T; ++t) {
      Real* o = out.row(t);
      const Real* bp = B.data();
      for (std::size_t c = 0; c < d; ++c) o[c] = bp[c];
      // y[t] = sum_j k[j] * x[t - (w-1) + j]
      const std::size_t jlo = (w - 1 > t) ? (w - 1 - t) : 0;
      for (std::size_t j = jlo; j < w; ++j) {
        const Real* xr = X.row(t - (w - 1) + j);
        const Real* kr = K.row(j);
        for (std::size_t c = 0; c < d; ++c) o[c] += kr[c] * xr[c];
      }
    }
    return make_node(std::move(out), {x.id, kernel.id, bias.id}, "conv1d",
                     [x, kernel, bias, T, d, w](Graph& g, const Tensor<Real>& go) {
                       const Tensor<Real>&X2 = g.val(x), &K2 = g.val(kernel);
                       if (g.wants_grad(x)) {
                         Tensor<Real> gx({T, d});
                         for (std::size_t t = 0; t < T; ++t) {
                           const Real* gr = go.row(t);
                           const std::size_t jlo = (w - 1 > t) ? (w - 1 - t) : 0;
                           for (std::size_t j = jlo; j < w; ++j) {
                             Real* gxr = gx.row(t - (w - 1) + j);
                             const Real* kr = K2.row(j);
                             for (std::size_t c = 0; c < d; ++c) gxr[c] += kr[c] * gr[c];
                           }
                         }
                         g.accum_grad(x.id, std::move(gx));
                       }
                       if (g.wants_grad(kernel)) {
                         Tensor<Real> gk({w, d});
                         for (std::size_t t = 0; t < T; ++t) {
                           const Real* gr = go.row(t);
                           const std::size_t jlo = (w - 1 > t) ? (w - 1 - t) : 0;
                           for (std::size_t j = jlo; j < w; ++j) {
                             const Real* xr = X2.row(t - (w - 1) + j);
                             Real* gkr = gk.row(j);
                             for (std::size_t c = 0; c < d; ++c) gkr[c] += gr[c] * xr[c];
                           }
                         }
                         g.accum_grad(kernel.id, std::move(gk));
                       }
                       if (g.wants_grad(bias)) {
                         Tensor<Real> gb(g.val(bias).shape());
                         for (std::size_t t = 0; t < T; ++t) {
                           const Real* gr = go.row(t);
                           for (std::size_t c = 0; c < d; ++c) gb[c] += gr[c];
                         }
                         g.accum_grad(bias.id, std::move(gb));
                       }
                     });
  }

  Var<Real> silu(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    Tensor<Real> out(X.shape());
    sigmoid_array(X.data(), out.data(), X.size());
    for (std::size_t i = 0; i < X.size(); ++i) out[i] *= X[i];
    return make_node(std::move(out), {x.id}, "silu",
                     [x](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       const Tensor<Real>& X2 = g.val(x);
                       Tensor<Real> gx(X2.shape());
                       sigmoid_array(X2.data(), gx.data(), X2.size());
                       for (std::size_t i = 0; i < gx.size(); ++i) {
                         const Real s = gx[i];
                         gx[i] = go[i] * s * (Real(1) + X2[i] * (Real(1) - s));
                       }
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  Var<Real> softplus(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    Tensor<Real> out(X.shape());
    // max(x,0) + log1p(exp(-|x|)): exact, branchless, vectorizable
    const Real* in = X.data();
    Real* o = out.data();
    const std::size_t nn = X.size();
    for (std::size_t i = 0; i < nn; ++i) o[i] = in[i] < Real(0) ? in[i] : -in[i];
    exp_array(o, o, nn);
    for (std::size_t i = 0; i < nn; ++i) {
      const Real mx = in[i] > Real(0) ? in[i] : Real(0);
      o[i] = mx + std::log1p(o[i]);
    }
    return make_node(std::move(out), {x.id}, "softplus",
                     [x](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       const Tensor<Real>& X2 = g.val(x);
                       Tensor<Real> gx(X2.shape());
                       sigmoid_array(X2.data(), gx.data(), X2.size());
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= go[i];
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  Var<Real> exp(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    Tensor<Real> out(X.shape());
    exp_array(X.data(), out.data(), X.size());
    return make_node(std::move(out), {x.id}, "exp",
                     [x, self = nodes_.size()](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       const Tensor<Real>& Y = g.nodes_[self].value;
                       Tensor<Real> gx(Y.shape());
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = go[i] * Y[i];
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  Var<Real> neg(Var<Real> x) { return scale(x, Real(-1)); }

  // Zero-mean unit-variance over the last axis, then affine. eps is added to
  // the variance.
  Var<Real> layer_norm(Var<Real> x, Var<Real> gain, Var<Real> bias, Real eps = Real(1e-5)) {
    const Tensor<Real>&X = val(x), &G = val(gain), &B = val(bias);
    const std::size_t m = X.rows(), d = X.cols();
    require(G.size() == d && B.size() == d, "layer_norm",
            format_msg("gain/bias must have ", d, " entries"));
    Tensor<Real> out(X.shape());
    auto inv_std = std::make_shared<std::vector<Real>>(m);
    auto xhat = std::make_shared<std::vector<Real>>(m * d);
    for (std::size_t i = 0; i < m; ++i) {
      const Real* xr = X.data() + i * d;
      Real mean = 0;
      for (std::size_t j = 0; j < d; ++j) mean += xr[j];
      mean /= Real(d);
      Real var = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const Real c = xr[j] - mean;
        var += c * c;
      }
      var /= Real(d);
      const Real is = Real(1) / std::sqrt(var + eps);
      (*inv_std)[i] = is;
      Real* o = out.data() + i * d;
      Real* xh = xhat->data() + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        xh[j] = (xr[j] - mean) * is;
        o[j] = G[j] * xh[j] + B[j];
      }
    }
    return make_node(std::move(out), {x.id, gain.id, bias.id}, "layer_norm",
                     [x, gain, bias, m, d, inv_std, xhat](Graph& g, const Tensor<Real>& go) {
                       const Tensor<Real>& G2 = g.val(gain);
                       if (g.wants_grad(x)) {
                         Tensor<Real> gx(g.val(x).shape());
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* gr = go.data() + i * d;
                           const Real* xh = xhat->data() + i * d;
                           Real sum_g = 0, sum_gx = 0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const Real t = gr[j] * G2[j];
                             sum_g += t;
                             sum_gx += t * xh[j];
                           }
                           sum_g /= Real(d);
                           sum_gx /= Real(d);
                           Real* gxr = gx.data() + i * d;
                           const Real is = (*inv_std)[i];
                           for (std::size_t j = 0; j < d; ++j) {
                             gxr[j] = (gr[j] * G2[j] - sum_g - xh[j] * sum_gx) * is;
                           }
                         }
                         g.accum_grad(x.id, std::move(gx));
                       }
                       if (g.wants_grad(gain)) {
                         Tensor<Real> gg(g.val(gain).shape());
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* gr = go.data() + i * d;
                           const Real* xh = xhat->data() + i * d;
                           for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xh[j];
                         }
                         g.accum_grad(gain.id, std::move(gg));
                       }
                       if (g.wants_grad(bias)) {
                         Tensor<Real> gb(g.val(bias).shape());
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* gr = go.data() + i * d;
                           for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
                         }
                         g.accum_grad(bias.id, std::move(gb));
                       }
                     });
  }

  // Softmax along the last axis (rows of a 2-D tensor; a 1-D tensor is one
  // row). Max-subtracted for stability.
  Var<Real> softmax(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    const std::size_t m = X.rows(), d = X.cols();
    Tensor<Real> out(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
      const Real* xr = X.data() + i * d;
      Real* o = out.data() + i * d;
      softmax_row(xr, o, d);
    }
    return make_node(std::move(out), {x.id}, "softmax",
                     [x, m, d, self = nodes_.size()](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       const Tensor<Real>& Y = g.nodes_[self].value;
                       Tensor<Real> gx(Y.shape());
                       for (std::size_t i = 0; i < m; ++i) {
                         const Real* y = Y.data() + i * d;
                         const Real* gr = go.data() + i * d;
                         Real dot = 0;
                         for (std::size_t j = 0; j < d; ++j) dot += gr[j] * y[j];
                         Real* gxr = gx.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) gxr[j] = y[j] * (gr[j] - dot);
                       }
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  // -sum(target * log_softmax(logits)), averaged over rows for 2-D inputs.
  // target rows must be valid distributions (within 1e-6).
  Var<Real> cross_entropy(Var<Real> logits, Var<Real> target) {
    const Tensor<Real>&X = val(logits), &T = val(target);
    require(X.same_shape(T), "cross_entropy",
            format_msg("shape mismatch ", X.shape_str(), " vs ", T.shape_str()));
    const std::size_t m = X.rows(), d = X.cols();
    for (std::size_t i = 0; i < m; ++i) {
      const Real* tr = T.data() + i * d;
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        if (tr[j] < Real(0)) {
          throw ValidationError("cross_entropy: target has negative entries");
        }
        s += static_cast<double>(tr[j]);
      }
      if (std::abs(s - 1.0) > 1e-6) {
        throw ValidationError(format_msg("cross_entropy: target row ", i,
                                         " sums to ", s, ", expected 1"));
      }
    }
    double loss = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const Real* xr = X.data() + i * d;
      const Real* tr = T.data() + i * d;
      const double lse = log_sum_exp(xr, d);
      double row = 0;
      for (std::size_t j = 0; j < d; ++j) {
        if (tr[j] != Real(0)) row += static_cast<double>(tr[j]) * (static_cast<double>(xr[j]) - lse);
      }
      loss -= row;
    }
    loss /= static_cast<double>(m);
    return make_node(Tensor<Real>::scalar(static_cast<Real>(loss)), {logits.id, target.id},
                     "cross_entropy",
                     [logits, target, m, d](Graph& g, const Tensor<Real>& go) {
                       // d/dlogits = (softmax(logits) - target) / m
                       const Real gscale = go[0] / Real(m);
                       const Tensor<Real>&X2 = g.val(logits), &T2 = g.val(target);
                       if (g.wants_grad(logits)) {
                         Tensor<Real> gx(X2.shape());
                         std::vector<Real> sm(d);
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* xr = X2.data() + i * d;
                           softmax_row(xr, sm.data(), d);
                           const Real* tr = T2.data() + i * d;
                           Real* gxr = gx.data() + i * d;
                           for (std::size_t j = 0; j < d; ++j) gxr[j] = (sm[j] - tr[j]) * gscale;
                         }
                         g.accum_grad(logits.id, std::move(gx));
                       }
                       if (g.wants_grad(target)) {
                         Tensor<Real> gt(T2.shape());
                         for (std::size_t i = 0; i < m; ++i) {
                           const Real* xr = X2.data() + i * d;
                           const Real lse = static_cast<Real>(log_sum_exp(xr, d));
                           Real* gtr = gt.data() + i * d;
                           for (std::size_t j = 0; j < d; ++j) gtr[j] = -(xr[j] - lse) * gscale;
                         }
                         g.accum_grad(target.id, std::move(gt));
                       }
                     });
  }

  Var<Real> row_slice(Var<Real> x, std::size_t r0, std::size_t len) {
    const Tensor<Real>& X = val(x);
    require(X.ndim() == 2, "row_slice", "expected 2-D input");
    const std::size_t m = X.dim(0), d = X.dim(1);
    require(r0 + len <= m, "row_slice",
            format_msg("rows [", r0, ", ", r0 + len, ") out of range for ", X.shape_str()));
    Tensor<Real> out({len, d});
    std::copy(X.data() + r0 * d, X.data() + (r0 + len) * d, out.data());
    return make_node(std::move(out), {x.id}, "row_slice",
                     [x, r0, len, d](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       Tensor<Real> gx(g.val(x).shape());
                       std::copy(go.data(), go.data() + len * d, gx.data() + r0 * d);
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  Var<Real> col_slice(Var<Real> x, std::size_t c0, std::size_t len) {
    const Tensor<Real>& X = val(x);
    require(X.ndim() == 2, "col_slice", "expected 2-D input");
    const std::size_t m = X.dim(0), d = X.dim(1);
    require(c0 + len <= d, "col_slice",
            format_msg("cols [", c0, ", ", c0 + len, ") out of range for ", X.shape_str()));
    Tensor<Real> out({m, len});
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(X.data() + i * d + c0, X.data() + i * d + c0 + len, out.data() + i * len);
    }
    return make_node(std::move(out), {x.id}, "col_slice",
                     [x, c0, len, m, d](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       Tensor<Real> gx(g.val(x).shape());
                       for (std::size_t i = 0; i < m; ++i) {
                         std::copy(go.data() + i * len, go.data() + (i + 1) * len,
                                   gx.data() + i * d + c0);
                       }
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  Var<Real> reverse_rows(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    require(X.ndim() == 2, "reverse_rows", "expected 2-D input");
    const std::size_t m = X.dim(0), d = X.dim(1);
    Tensor<Real> out(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(X.data() + i * d, X.data() + (i + 1) * d, out.data() + (m - 1 - i) * d);
    }
    return make_node(std::move(out), {x.id}, "reverse_rows",
                     [x, m, d](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       Tensor<Real> gx(g.val(x).shape());
                       for (std::size_t i = 0; i < m; ++i) {
                         std::copy(go.data() + i * d, go.data() + (i + 1) * d,
                                   gx.data() + (m - 1 - i) * d);
                       }
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  // out[:, j] = x[:, index[j]]. Gradient scatter-adds back.
  Var<Real> gather_cols(Var<Real> x, std::vector<std::size_t> index) {
    const Tensor<Real>& X = val(x);
    require(X.ndim() == 2, "gather_cols", "expected 2-D input");
    const std::size_t m = X.dim(0), d = X.dim(1), n = index.size();
    for (std::size_t j : index) {
      require(j < d, "gather_cols", format_msg("index ", j, " out of range for ", X.shape_str()));
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(index));
    Tensor<Real> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      const Real* xr = X.data() + i * d;
      Real* o = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] = xr[(*idx)[j]];
    }
    return make_node(std::move(out), {x.id}, "gather_cols",
                     [x, idx, m, d, n](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       Tensor<Real> gx(g.val(x).shape());
                       for (std::size_t i = 0; i < m; ++i) {
                         const Real* gr = go.data() + i * n;
                         Real* gxr = gx.data() + i * d;
                         for (std::size_t j = 0; j < n; ++j) gxr[(*idx)[j]] += gr[j];
                       }
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  // (m, d) -> (m): sum over the last axis.
  Var<Real> row_sum(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    require(X.ndim() == 2, "row_sum", "expected 2-D input");
    const std::size_t m = X.dim(0), d = X.dim(1);
    Tensor<Real> out({m});
    for (std::size_t i = 0; i < m; ++i) {
      const Real* xr = X.data() + i * d;
      Real acc = 0;
      for (std::size_t j = 0; j < d; ++j) acc += xr[j];
      out[i] = acc;
    }
    return make_node(std::move(out), {x.id}, "row_sum",
                     [x, m, d](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       Tensor<Real> gx(g.val(x).shape());
                       for (std::size_t i = 0; i < m; ++i) {
                         Real* gxr = gx.data() + i * d;
                         for (std::size_t j = 0; j < d; ++j) gxr[j] = go[i];
                       }
                       g.accum_grad(x.id, std::move(gx));
                     });
  }

  Var<Real> sum(Var<Real> x) {
    const Tensor<Real>& X = val(x);
    double acc = 0;
    for (std::size_t i = 0; i < X.size(); ++i) acc += static_cast<double>(X[i]);
    return make_node(Tensor<Real>::scalar(static_cast<Real>(acc)), {x.id}, "sum",
                     [x](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(x)) return;
                       g.accum_grad(x.id, Tensor<Real>::full(g.val(x).shape(), go[0]));
                     });
  }

  Var<Real> mean(Var<Real> x) {
    const std::size_t n = val(x).size();
    return scale(sum(x), Real(1) / Real(n));
  }

  // Selective state-space scan, time-major. Per channel c and state s:
  //   h[t] = exp(dt[t,c] * a[c,s]) * h[t-1] + dt[t,c] * b[t,s] * u[t,c]
  //   y[t,c] = sum_s cmat[t,s] * h[t] + dskip[c] * u[t,c]
  // Shapes: u,dt (T,d); a (d,S); b,cmat (T,S); dskip (d).
  Var<Real> selective_scan(Var<Real> u, Var<Real> dt, Var<Real> a, Var<Real> b,
                           Var<Real> cmat, Var<Real> dskip) {
    const Tensor<Real>&U = val(u), &DT = val(dt), &A = val(a), &B = val(b), &C = val(cmat),
          &D = val(dskip);
    require(U.ndim() == 2 && DT.same_shape(U), "selective_scan",
            format_msg("u/dt shape mismatch: ", U.shape_str(), " vs ", DT.shape_str()));
    const std::size_t T = U.dim(0), d = U.dim(1);
    require(A.ndim() == 2 && A.dim(0) == d, "selective_scan",
            format_msg("a must be (channels, states), got ", A.shape_str()));
    const std::size_t S = A.dim(1);
    require(B.ndim() == 2 && B.dim(0) == T && B.dim(1) == S, "selective_scan",
            format_msg("b must be (T, states), got ", B.shape_str()));
    require(C.same_shape(B), "selective_scan", "b/c shape mismatch");
    require(D.size() == d, "selective_scan", "dskip must have one entry per channel");
    for (std::size_t i = 0; i < DT.size(); ++i) {
      if (!(DT[i] > Real(0))) {
        throw NumericError("selective_scan: nonpositive step size after parameterization");
      }
    }

    const bool save_states = grad_enabled_ && any_requires({u.id, dt.id, a.id, b.id, cmat.id, dskip.id});

    // Decay factors exp(dt*a) for all (t,c,s), written once into an
    // uninitialized buffer; the exp pass is pure arithmetic and vectorizes.
    // Inference reuses a thread-local scratch block so long sequences do not
    // churn the allocator.
    std::shared_ptr<Real[]> decay;
    if (save_states) {
      decay.reset(new Real[T * d * S]);
    } else {
      static thread_local std::vector<Real> scratch;
      if (scratch.size() < T * d * S) scratch.resize(T * d * S);
      decay = std::shared_ptr<Real[]>(scratch.data(), [](Real*) {});
    }
    {
      for (std::size_t t = 0; t < T; ++t) {
        const Real* dtr = DT.data() + t * d;
        Real* drow = decay.get() + t * d * S;
        for (std::size_t c = 0; c < d; ++c) {
          const Real* __restrict__ ar = A.data() + c * S;
          Real* __restrict__ dd = drow + c * S;
          const Real dtc = dtr[c];
          for (std::size_t s = 0; s < S; ++s) dd[s] = dtc * ar[s];
        }
      }
      exp_array(decay.get(), decay.get(), T * d * S);
    }

    std::shared_ptr<Real[]> h_all(save_states ? new Real[T * d * S] : nullptr);

    Tensor<Real> out({T, d});
    std::vector<Real> h(d * S, Real(0));
    std::vector<Real> drive(d * S);
    for (std::size_t t = 0; t < T; ++t) {
      const Real* dtr = DT.data() + t * d;
      const Real* ur = U.data() + t * d;
      const Real* br = B.data() + t * S;
      const Real* cr = C.data() + t * S;
      const Real* __restrict__ dec = decay.get() + t * d * S;
      Real* o = out.row(t);
      // input drive dt*u (broadcast per channel) times B (tiled per state)
      for (std::size_t c = 0; c < d; ++c) {
        const Real scale_in = dtr[c] * ur[c];
        Real* __restrict__ dc = drive.data() + c * S;
        for (std::size_t s = 0; s < S; ++s) dc[s] = scale_in * br[s];
      }
      Real* __restrict__ hh = h.data();
      const Real* __restrict__ dr = drive.data();
      for (std::size_t i = 0; i < d * S; ++i) hh[i] = dec[i] * hh[i] + dr[i];
      for (std::size_t c = 0; c < d; ++c) {
        const Real* hc = h.data() + c * S;
        Real a0 = 0, a1 = 0, a2 = 0, a3 = 0;
        std::size_t s = 0;
        for (; s + 4 <= S; s += 4) {
          a0 += cr[s] * hc[s];
          a1 += cr[s + 1] * hc[s + 1];
          a2 += cr[s + 2] * hc[s + 2];
          a3 += cr[s + 3] * hc[s + 3];
        }
        Real acc = (a0 + a1) + (a2 + a3);
        for (; s < S; ++s) acc += cr[s] * hc[s];
        o[c] = acc + D[c] * ur[c];
      }
      if (save_states) {
        std::copy(h.begin(), h.end(), h_all.get() + t * d * S);
      }
    }

    return make_node(
        std::move(out), {u.id, dt.id, a.id, b.id, cmat.id, dskip.id}, "selective_scan",
        [u, dt, a, b, cmat, dskip, T, d, S, decay, h_all](Graph& g, const Tensor<Real>& go) {
          const Tensor<Real>&U2 = g.val(u), &DT2 = g.val(dt), &A2 = g.val(a), &B2 = g.val(b),
                &C2 = g.val(cmat), &D2 = g.val(dskip);
          Tensor<Real> gu({T, d}), gdt({T, d}), ga({d, S}), gb({T, S}), gc({T, S}), gd({d});
          std::vector<Real> gh(d * S, Real(0));
          std::vector<Real> tmp1(S), tmp2(S);
          const std::vector<Real> zero_row(S, Real(0));
          for (std::size_t tt = T; tt-- > 0;) {
            const Real* gr = go.data() + tt * d;
            const Real* ur = U2.data() + tt * d;
            const Real* dtr = DT2.data() + tt * d;
            const Real* br = B2.data() + tt * S;
            const Real* cr = C2.data() + tt * S;
            const Real* dec = decay.get() + tt * d * S;
            const Real* ht = h_all.get() + tt * d * S;
            const Real* hprev = tt > 0 ? h_all.get() + (tt - 1) * d * S : nullptr;
            Real* gbr = gb.data() + tt * S;
            Real* gcr = gc.data() + tt * S;
            for (std::size_t c = 0; c < d; ++c) {
              Real* __restrict__ ghc = gh.data() + c * S;
              const Real* __restrict__ hc = ht + c * S;
              const Real* __restrict__ hp = hprev ? hprev + c * S : zero_row.data();
              const Real* __restrict__ dd = dec + c * S;
              const Real* __restrict__ ar = A2.data() + c * S;
              Real* __restrict__ gar = ga.data() + c * S;
              Real* __restrict__ t1 = tmp1.data();
              Real* __restrict__ t2 = tmp2.data();
              const Real gyc = gr[c];
              const Real dtc = dtr[c];
              const Real uc = ur[c];
              gd[c] += gyc * uc;
              const Real dtuc = dtc * uc;
              for (std::size_t s = 0; s < S; ++s) {
                const Real ghs = ghc[s] + gyc * cr[s];
                gcr[s] += gyc * hc[s];
                const Real d_decay = ghs * hp[s];
                gar[s] += d_decay * dtc * dd[s];
                gbr[s] += ghs * dtuc;
                ghc[s] = ghs * dd[s];
                t1[s] = d_decay * ar[s] * dd[s];
                t2[s] = ghs * br[s];
              }
              // ddt = sum(t1) + u*sum(t2); du = gy*D + dt*sum(t2)
              const Real r2 = reduce_add(t2, S);
              gdt.data()[tt * d + c] = reduce_add(t1, S) + uc * r2;
              gu.data()[tt * d + c] = gyc * D2[c] + dtc * r2;
            }
          }
          if (g.wants_grad(u)) g.accum_grad(u.id, std::move(gu));
          if (g.wants_grad(dt)) g.accum_grad(dt.id, std::move(gdt));
          if (g.wants_grad(a)) g.accum_grad(a.id, std::move(ga));
          if (g.wants_grad(b)) g.accum_grad(b.id, std::move(gb));
          if (g.wants_grad(cmat)) g.accum_grad(cmat.id, std::move(gc));
          if (g.wants_grad(dskip)) g.accum_grad(dskip.id, std::move(gd));
        });
  }

  // Binary cross-entropy between a predicted positive mass p[i] and a fixed
  // target mass a[i], averaged. Probabilities are clamped at `clamp` before
  // the log. Used for consistency losses where the target side carries no
  // gradient.
  Var<Real> binary_cross_entropy(Var<Real> pos, const Tensor<Real>& target,
                                 Real clamp = Real(1e-8)) {
    const Tensor<Real>& P = val(pos);
    require(P.size() == target.size(), "binary_cross_entropy",
            format_msg("size mismatch ", P.shape_str(), " vs ", target.shape_str()));
    const std::size_t n = P.size();
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::max(static_cast<double>(P[i]), static_cast<double>(clamp));
      const double q = std::max(1.0 - static_cast<double>(P[i]), static_cast<double>(clamp));
      const double aw = static_cast<double>(target[i]);
      loss -= aw * std::log(p) + (1.0 - aw) * std::log(q);
    }
    loss /= static_cast<double>(n);
    auto tgt = std::make_shared<Tensor<Real>>(target);
    return make_node(Tensor<Real>::scalar(static_cast<Real>(loss)), {pos.id},
                     "binary_cross_entropy",
                     [pos, tgt, n, clamp](Graph& g, const Tensor<Real>& go) {
                       if (!g.wants_grad(pos)) return;
                       const Tensor<Real>& P2 = g.val(pos);
                       Tensor<Real> gp(P2.shape());
                       const Real gscale = go[0] / Real(n);
                       for (std::size_t i = 0; i < n; ++i) {
                         const Real aw = (*tgt)[i];
                         Real grad = 0;
                         if (P2[i] > clamp) grad -= aw / P2[i];
                         if (Real(1) - P2[i] > clamp) grad += (Real(1) - aw) / (Real(1) - P2[i]);
                         gp[i] = grad * gscale;
                       }
                       g.accum_grad(pos.id, std::move(gp));
                     });
  }

  // ---- shared scalar helpers ----

  static Real sigmoid(Real x) {
    if (x >= Real(0)) {
      const Real e = std::exp(-x);
      return Real(1) / (Real(1) + e);
    }
    const Real e = std::exp(x);
    return e / (Real(1) + e);
  }

  // Branchless stable sigmoid over a buffer: e = exp(-|x|) stays in (0, 1],
  // then select the matching quotient per sign.
  static void sigmoid_array(const Real* x, Real* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] < Real(0) ? x[i] : -x[i];
    exp_array(out, out, n);
    for (std::size_t i = 0; i < n; ++i) {
      const Real e = out[i];
      out[i] = x[i] >= Real(0) ? Real(1) / (Real(1) + e) : e / (Real(1) + e);
    }
  }

  static Real softplus_scalar(Real x) {
    if (x > Real(20)) return x;
    return std::log1p(std::exp(x));
  }

  static double log_sum_exp(const Real* x, std::size_t n) {
    Real mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += std::exp(static_cast<double>(x[i] - mx));
    return static_cast<double>(mx) + std::log(acc);
  }

  // Four-lane summation; deterministic and wide enough to vectorize.
  static Real reduce_add(const Real* x, std::size_t n) {
    Real a0 = 0, a1 = 0, a2 = 0, a3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
      a0 += x[i];
      a1 += x[i + 1];
      a2 += x[i + 2];
      a3 += x[i + 3];
    }
    for (; i < n; ++i) a0 += x[i];
    return (a0 + a1) + (a2 + a3);
  }

  static void softmax_row(const Real* x, Real* out, std::size_t n) {
    Real mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - mx;
    exp_array(out, out, n);
    const Real inv = Real(1) / reduce_add(out, n);
    for (std::size_t i = 0; i < n; ++i) out[i] *= inv;
  }

 private:
  struct Node {
    Tensor<Real> value;
    std::vector<int> inputs;
    std::function<void(Graph&, const Tensor<Real>&)> backward;
    bool requires_grad = false;
    const char* op = "";
  };

  int check_id(Var<Real> v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      throw ValidationError("graph: variable does not belong to this graph");
    }
    return v.id;
  }

  bool wants_grad(Var<Real> v) const { return nodes_[v.id].requires_grad; }

  bool any_requires(std::initializer_list<int> ids) const {
    for (int i : ids) {
      if (i >= 0 && nodes_[i].requires_grad) return true;
    }
    return false;
  }

  static void require(bool ok, const char* op, const std::string& msg) {
    if (!ok) throw ValidationError(format_msg(op, ": ", msg));
  }

  Var<Real> make_leaf(Tensor<Real> t, bool requires_grad, const char* op) {
    check_finite(t, op);
    Node n;
    n.value = std::move(t);
    n.requires_grad = requires_grad && grad_enabled_;
    n.op = op;
    nodes_.push_back(std::move(n));
    return Var<Real>{static_cast<int>(nodes_.size()) - 1};
  }

  Var<Real> make_node(Tensor<Real> out, std::vector<int> inputs, const char* op,
                      std::function<void(Graph&, const Tensor<Real>&)> backward) {
    check_finite(out, op);
    Node n;
    n.value = std::move(out);
    n.inputs = std::move(inputs);
    n.op = op;
    bool rg = false;
    for (int i : n.inputs) {
      if (i >= 0 && nodes_[i].requires_grad) rg = true;
    }
    n.requires_grad = rg && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<Real>{static_cast<int>(nodes_.size()) - 1};
  }

  void check_finite(const Tensor<Real>& t, const char* op) const {
    if (!check_numerics_) return;
    if (!t.all_finite()) {
      throw NumericError(format_msg(op, ": non-finite value in output of shape ", t.shape_str()));
    }
  }

  void accum_grad(int id, Tensor<Real> g) {
    if (grads_[id].size() == 0) {
      grads_[id] = std::move(g);
      return;
    }
    Tensor<Real>& acc = grads_[id];
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  }

  bool grad_enabled_;
  bool check_numerics_;
  std::vector<Node> nodes_;
  std::vector<Tensor<Real>> grads_;
};

}  // namespace melex
