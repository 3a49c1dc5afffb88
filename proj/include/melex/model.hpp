#pragma once

#include <cstdint>

#include "melex/decoder.hpp"
#include "melex/encoder.hpp"
#include "melex/params.hpp"

namespace melex {

struct ModelConfig {
  EncoderConfig encoder;
  bool note_decoder = true;

  void validate() const { encoder.validate(); }
};

// Encoder + decoder parameters with the forward pass that produces the
// per-frame prediction maps.
template <typename Real>
class Model {
 public:
  Model() = default;

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x6d6f64656cull));
    init_encoder_params(params_, cfg.encoder, rng);
    init_decoder_params(params_, cfg.encoder.d_model, cfg.note_decoder, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<Real>& params() { return params_; }
  const ParamStore<Real>& params() const { return params_; }

  struct Run {
    BoundParams<Real> bound;
    Var<Real> encoded;
    DecoderOut<Real> out;
  };

  // Binds every parameter into the graph and runs encoder + decoder on one
  // clip of patches.
  Run forward(Graph<Real>& g, const Tensor<Real>& patches) const {
    BoundParams<Real> bp(g, params_);
    Var<Real> pv = g.constant(patches);
    Var<Real> enc = encode(g, bp, cfg_.encoder, pv);
    DecoderOut<Real> out = decode_heads(g, bp, enc, cfg_.note_decoder);
    return Run{std::move(bp), enc, out};
  }

  Run forward(Graph<Real>& g, const CfpFeature& feature) const {
    return forward(g, patchify<Real>(feature, cfg_.encoder.patch_width));
  }

 private:
  ModelConfig cfg_;
  ParamStore<Real> params_;
};

}  // namespace melex
