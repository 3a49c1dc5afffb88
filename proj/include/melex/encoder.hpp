#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "melex/cfp.hpp"
#include "melex/common.hpp"
#include "melex/graph.hpp"
#include "melex/params.hpp"

namespace melex {

struct EncoderConfig {
  std::size_t d_model = 128;
  std::size_t d_state = 16;
  std::size_t expand = 2;
  std::size_t conv_width = 4;
  std::size_t num_layers = 4;
  std::size_t patch_width = 1;
  std::size_t max_frames = 1024;
  std::size_t dt_rank = 0;  // 0 = d_model/16, at least 1

  std::size_t d_inner() const { return expand * d_model; }
  std::size_t resolved_dt_rank() const {
    return dt_rank > 0 ? dt_rank : std::max<std::size_t>(1, (d_model + 15) / 16);
  }
  std::size_t patch_dim() const { return kNumChannels * kFreqBins * patch_width; }

  void validate() const {
    if (d_model == 0 || d_state == 0 || expand == 0 || num_layers > 64 ||
        patch_width == 0 || max_frames == 0) {
      throw ValidationError("encoder config: all dimensions must be positive");
    }
    if (conv_width == 0) throw ValidationError("encoder config: conv_width must be positive");
  }
};

// Patch tokenization along time: token t is the flattened
// (channels x bins x patch_width) slab; a trailing partial patch is
// zero-padded.
template <typename Real>
Tensor<Real> patchify(const CfpFeature& f, std::size_t patch_width) {
  if (patch_width == 0) throw ValidationError("patchify: patch_width must be positive");
  const std::size_t T = f.frames;
  const std::size_t tp = (T + patch_width - 1) / patch_width;
  const std::size_t dim = kNumChannels * kFreqBins * patch_width;
  Tensor<Real> out({tp, dim});
  for (std::size_t p = 0; p < tp; ++p) {
    Real* row = out.row(p);
    std::size_t i = 0;
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      for (std::size_t b = 0; b < kFreqBins; ++b) {
        for (std::size_t w = 0; w < patch_width; ++w, ++i) {
          const std::size_t t = p * patch_width + w;
          row[i] = t < T ? static_cast<Real>(f.at(ch, b, t)) : Real(0);
        }
      }
    }
  }
  return out;
}

// Inverse of patchify with padding dropped.
template <typename Real>
CfpFeature unpatchify(const Tensor<Real>& patches, std::size_t patch_width, std::size_t frames) {
  CfpFeature f;
  f.frames = frames;
  f.data.assign(kNumChannels * kFreqBins * frames, 0.0f);
  const std::size_t tp = patches.rows();
  for (std::size_t p = 0; p < tp; ++p) {
    const Real* row = patches.row(p);
    std::size_t i = 0;
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      for (std::size_t b = 0; b < kFreqBins; ++b) {
        for (std::size_t w = 0; w < patch_width; ++w, ++i) {
          const std::size_t t = p * patch_width + w;
          if (t < frames) f.at(ch, b, t) = static_cast<float>(row[i]);
        }
      }
    }
  }
  return f;
}

namespace enc_names {
inline std::string layer(std::size_t l, const std::string& rest) {
  return format_msg("enc.layer", l, ".", rest);
}
}  // namespace enc_names

// Parameter initialization. Linear weights use fan-in uniform bounds; the
// state matrix is stored as log(-A) with A = -(1..d_state) per channel; the
// step-size projection bias is set so initial steps land in [1e-3, 1e-1].
template <typename Real>
void init_encoder_params(ParamStore<Real>& ps, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t dm = cfg.d_model, di = cfg.d_inner(), S = cfg.d_state;
  const std::size_t dtr = cfg.resolved_dt_rank();

  auto uniform_init = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor<Real> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    t.fill_uniform(rng, -bound, bound);
    return t;
  };

  ps.add("enc.embed.w", uniform_init({cfg.patch_dim(), dm}, cfg.patch_dim()));
  ps.add("enc.embed.b", Tensor<Real>({dm}));
  {
    Tensor<Real> pos({cfg.max_frames, dm});
    pos.fill_normal(rng, 0.02);
    ps.add("enc.pos_table", std::move(pos));
  }

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    auto n = [&](const std::string& rest) { return enc_names::layer(l, rest); };
    ps.add(n("norm.g"), Tensor<Real>::full({dm}, Real(1)));
    ps.add(n("norm.b"), Tensor<Real>({dm}));
    ps.add(n("in.w"), uniform_init({dm, 2 * di}, dm));
    ps.add(n("in.b"), Tensor<Real>({2 * di}));
    for (const char* dir : {"fwd", "bwd"}) {
      auto d = [&](const std::string& rest) { return n(format_msg(dir, ".", rest)); };
      ps.add(d("conv.w"), uniform_init({cfg.conv_width, di}, cfg.conv_width));
      ps.add(d("conv.b"), Tensor<Real>({di}));
      ps.add(d("xproj.w"), uniform_init({di, dtr + 2 * S}, di));
      ps.add(d("dt.w"), uniform_init({dtr, di}, dtr));
      {
        Tensor<Real> dtb({di});
        for (std::size_t c = 0; c < di; ++c) {
          const double dt0 = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
          dtb[c] = static_cast<Real>(std::log(std::expm1(dt0)));
        }
        ps.add(d("dt.b"), std::move(dtb));
      }
      {
        Tensor<Real> alog({di, S});
        for (std::size_t c = 0; c < di; ++c) {
          for (std::size_t s = 0; s < S; ++s) {
            alog.at(c, s) = static_cast<Real>(std::log(static_cast<double>(s + 1)));
          }
        }
        ps.add(d("a_log"), std::move(alog));
      }
      ps.add(d("d"), Tensor<Real>::full({di}, Real(1)));
    }
    ps.add(n("out.w"), uniform_init({di, dm}, di));
    ps.add(n("out.b"), Tensor<Real>({dm}));
  }
  ps.add("enc.final_norm.g", Tensor<Real>::full({dm}, Real(1)));
  ps.add("enc.final_norm.b", Tensor<Real>({dm}));
}

// One scan branch: causal conv + SiLU, input-dependent (dt, B, C) projections
// and the selective scan itself. `reversed` runs it right-to-left.
template <typename Real>
Var<Real> scan_branch(Graph<Real>& g, const BoundParams<Real>& bp, const EncoderConfig& cfg,
                      std::size_t layer, const char* dir, Var<Real> x, bool reversed) {
  auto p = [&](const std::string& rest) {
    return bp[enc_names::layer(layer, format_msg(dir, ".", rest))];
  };
  const std::size_t S = cfg.d_state, dtr = cfg.resolved_dt_rank();
  Var<Real> xin = reversed ? g.reverse_rows(x) : x;
  Var<Real> u = g.silu(g.conv1d_causal(xin, p("conv.w"), p("conv.b")));
  Var<Real> proj = g.linear(u, p("xproj.w"));
  Var<Real> dt = g.softplus(g.linear(g.col_slice(proj, 0, dtr), p("dt.w"), p("dt.b")));
  Var<Real> bmat = g.col_slice(proj, dtr, S);
  Var<Real> cmat = g.col_slice(proj, dtr + S, S);
  Var<Real> a = g.neg(g.exp(p("a_log")));
  Var<Real> y = g.selective_scan(u, dt, a, bmat, cmat, p("d"));
  return reversed ? g.reverse_rows(y) : y;
}

// Bidirectional block: pre-norm, shared in-projection into (x, z), forward and
// backward scan branches gated by SiLU(z), out-projection plus residual.
template <typename Real>
Var<Real> mamba_block_bidirectional(Graph<Real>& g, const BoundParams<Real>& bp,
                                    const EncoderConfig& cfg, std::size_t layer,
                                    Var<Real> input) {
  auto p = [&](const std::string& rest) { return bp[enc_names::layer(layer, rest)]; };
  const std::size_t di = cfg.d_inner();
  Var<Real> normed = g.layer_norm(input, p("norm.g"), p("norm.b"));
  Var<Real> xz = g.linear(normed, p("in.w"), p("in.b"));
  Var<Real> x = g.col_slice(xz, 0, di);
  Var<Real> gate = g.silu(g.col_slice(xz, di, di));
  Var<Real> yf = g.mul(scan_branch(g, bp, cfg, layer, "fwd", x, false), gate);
  Var<Real> yb = g.mul(scan_branch(g, bp, cfg, layer, "bwd", x, true), gate);
  Var<Real> proj = g.linear(g.add(yf, yb), p("out.w"), p("out.b"));
  return g.add(proj, input);
}

// Token embedding plus learned positions.
template <typename Real>
Var<Real> embed(Graph<Real>& g, const BoundParams<Real>& bp, const EncoderConfig& cfg,
                Var<Real> patches) {
  const std::size_t tp = g.val(patches).rows();
  if (tp > cfg.max_frames) {
    throw ValidationError(format_msg(
        "embed: sequence of ", tp, " patches exceeds max_frames=", cfg.max_frames,
        "; run inference in overlapping chunks"));
  }
  Var<Real> tok = g.linear(patches, bp["enc.embed.w"], bp["enc.embed.b"]);
  return g.add(tok, g.row_slice(bp["enc.pos_table"], 0, tp));
}

template <typename Real>
Var<Real> encode(Graph<Real>& g, const BoundParams<Real>& bp, const EncoderConfig& cfg,
                 Var<Real> patches) {
  Var<Real> h = embed(g, bp, cfg, patches);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    h = mamba_block_bidirectional(g, bp, cfg, l, h);
  }
  return g.layer_norm(h, bp["enc.final_norm.g"], bp["enc.final_norm.b"]);
}

}  // namespace melex
