#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "melex/audio.hpp"
#include "melex/common.hpp"
#include "melex/graph.hpp"
#include "melex/tensor.hpp"

namespace melex {

// --- waveform augmentations (applied before the CFP front end) ---

struct WeakAugment {
  std::optional<double> snr_db = 30.0;  // nullopt = disabled
};

struct StrongAugment {
  std::optional<std::pair<double, double>> gain_db = std::make_pair(-6.0, 6.0);
  std::optional<std::pair<double, double>> reverb_rt60 = std::make_pair(0.1, 0.4);
  std::optional<double> snr_db = 20.0;
  double reverb_wet = 0.3;
};

struct AugmentationSpec {
  WeakAugment weak;
  StrongAugment strong;
};

inline void add_noise_at_snr(std::vector<float>& x, double snr_db, Rng& rng) {
  const double sig_rms = rms(x);
  if (sig_rms <= 0.0) return;
  const double sigma = sig_rms / std::pow(10.0, snr_db / 20.0);
  for (float& v : x) v += static_cast<float>(sigma * rng.normal());
}

inline AudioClip weak_augment(const AudioClip& clip, const WeakAugment& spec, Rng& rng) {
  clip.validate("weak_augment");
  AudioClip out = clip;
  if (spec.snr_db) {
    add_noise_at_snr(out.samples, *spec.snr_db, rng);
    clip_in_place(out.samples);
  }
  return out;
}

// Exponentially decaying noise impulse response; h[0] = 1 keeps the direct
// path, the tail is normalized per the wet level.
inline std::vector<float> reverb_impulse(double rt60, double wet, int sample_rate, Rng& rng) {
  const std::size_t len = std::max<std::size_t>(
      2, static_cast<std::size_t>(rt60 * sample_rate));
  std::vector<float> h(len);
  h[0] = 1.0f;
  // amplitude decays by 60 dB over rt60: exp(-6.9078 * t / rt60)
  const double k = 6.907755278982137 / (rt60 * sample_rate);
  double tail_energy = 0.0;
  for (std::size_t n = 1; n < len; ++n) {
    h[n] = static_cast<float>(rng.normal() * std::exp(-k * static_cast<double>(n)));
    tail_energy += static_cast<double>(h[n]) * h[n];
  }
  if (tail_energy > 0.0) {
    const float scale = static_cast<float>(wet / std::sqrt(tail_energy));
    for (std::size_t n = 1; n < len; ++n) h[n] *= scale;
  }
  return h;
}

// gain -> reverb -> noise, in that order. Convolution keeps full support, so
// the output is longer by the impulse length minus one.
inline AudioClip strong_augment(const AudioClip& clip, const StrongAugment& spec, Rng& rng) {
  clip.validate("strong_augment");
  AudioClip out = clip;
  if (spec.gain_db) {
    const double db = rng.uniform(spec.gain_db->first, spec.gain_db->second);
    const float g = static_cast<float>(std::pow(10.0, db / 20.0));
    for (float& v : out.samples) v *= g;
  }
  if (spec.reverb_rt60) {
    const double rt60 = rng.uniform(spec.reverb_rt60->first, spec.reverb_rt60->second);
    const std::vector<float> h = reverb_impulse(rt60, spec.reverb_wet, out.sample_rate, rng);
    std::vector<float> conv(out.samples.size() + h.size() - 1, 0.0f);
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
      const float xi = out.samples[i];
      if (xi == 0.0f) continue;
      for (std::size_t j = 0; j < h.size(); ++j) conv[i + j] += xi * h[j];
    }
    out.samples = std::move(conv);
  }
  if (spec.snr_db) add_noise_at_snr(out.samples, *spec.snr_db, rng);
  clip_in_place(out.samples);
  return out;
}

// --- confidence-threshold machinery ---

struct ConfidenceState {
  double mu_f0 = 0.95;
  double mu_note = 0.95;
  double momentum = 0.999;
  std::uint64_t step = 0;

  void validate() const {
    if (!(mu_f0 > 0.0 && mu_f0 <= 1.0 && mu_note > 0.0 && mu_note <= 1.0)) {
      throw ValidationError("confidence state: mu must lie in (0, 1]");
    }
    if (momentum < 0.0 || momentum > 1.0) {
      throw ValidationError("confidence state: momentum must lie in [0, 1]");
    }
  }
};

// EMA update mu <- m*mu + (1-m)*p from the current local confidence.
inline double update_confidence(double mu, double momentum, double p_t) {
  if (!(p_t > 0.0 && p_t <= 1.0)) {
    throw ValidationError(format_msg("update_confidence: local confidence ", p_t,
                                     " outside (0, 1]"));
  }
  return momentum * mu + (1.0 - momentum) * p_t;
}

struct BinarySplit {
  std::size_t k = 0;
  double pos_mass = 0.0;
  double neg_mass = 0.0;
  std::vector<std::size_t> pos_indices;
};

// Descending-probability prefix split: the smallest k whose cumulative mass
// reaches mu, capped at C-1 so the negative part is never empty. Ties break
// toward the lower class index.
template <typename Real>
BinarySplit topk_split(const Real* probs, std::size_t C, double mu) {
  if (C < 2) throw ValidationError("topk_split: need at least two classes");
  double total = 0.0;
  for (std::size_t i = 0; i < C; ++i) {
    if (probs[i] < Real(0)) throw ValidationError("topk_split: negative probability");
    total += static_cast<double>(probs[i]);
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw ValidationError(format_msg("topk_split: probabilities sum to ", total));
  }
  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return probs[a] > probs[b];
  });
  BinarySplit split;
  double cum = 0.0;
  for (std::size_t k = 0; k < C - 1; ++k) {
    cum += static_cast<double>(probs[order[k]]);
    split.pos_indices.push_back(order[k]);
    split.k = k + 1;
    split.pos_mass = cum;
    if (cum >= mu) break;
  }
  split.neg_mass = 1.0 - split.pos_mass;
  return split;
}

template <typename Real>
BinarySplit topk_split(const Tensor<Real>& probs, double mu) {
  return topk_split(probs.data(), probs.size(), mu);
}

// Mean top-k cumulative probability over a batch of instances (Eq.-level
// "local confidence").
inline double local_confidence(const std::vector<BinarySplit>& splits) {
  if (splits.empty()) throw ValidationError("local_confidence: empty batch");
  double acc = 0.0;
  for (const auto& s : splits) acc += s.pos_mass;
  return acc / static_cast<double>(splits.size());
}

// Per-instance weak-branch binary targets for one prediction head. Instances
// are frames; the split and the positive index set come from the (detached)
// weak probabilities at threshold mu.
struct CbrTargets {
  std::vector<BinarySplit> splits;          // one per frame
  Tensor<float> mask;                        // (T, C) 0/1 positive-set mask
  std::vector<double> weak_pos_mass;         // (T)
};

template <typename Real>
CbrTargets cbr_targets_from_weak(const Tensor<Real>& weak_probs, double mu) {
  const std::size_t T = weak_probs.rows(), C = weak_probs.cols();
  CbrTargets tg;
  tg.mask = Tensor<float>({T, C});
  tg.splits.reserve(T);
  tg.weak_pos_mass.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    BinarySplit s = topk_split(weak_probs.row(t), C, mu);
    for (std::size_t idx : s.pos_indices) tg.mask.at(t, idx) = 1.0f;
    tg.weak_pos_mass.push_back(s.pos_mass);
    tg.splits.push_back(std::move(s));
  }
  return tg;
}

// Global-k escape hatch: every instance uses the same k, the smallest one
// whose batch-mean cumulative mass reaches mu.
template <typename Real>
CbrTargets cbr_targets_from_weak_global_k(const Tensor<Real>& weak_probs, double mu) {
  const std::size_t T = weak_probs.rows(), C = weak_probs.cols();
  // per-frame descending order
  std::vector<std::vector<std::size_t>> orders(T);
  for (std::size_t t = 0; t < T; ++t) {
    auto& order = orders[t];
    order.resize(C);
    std::iota(order.begin(), order.end(), 0);
    const Real* row = weak_probs.row(t);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  }
  std::size_t k = C - 1;
  std::vector<double> cum(T, 0.0);
  for (std::size_t kk = 1; kk <= C - 1; ++kk) {
    double mean_cum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      cum[t] += static_cast<double>(weak_probs.row(t)[orders[t][kk - 1]]);
      mean_cum += cum[t];
    }
    if (mean_cum / static_cast<double>(T) >= mu) {
      k = kk;
      break;
    }
  }
  CbrTargets tg;
  tg.mask = Tensor<float>({T, C});
  for (std::size_t t = 0; t < T; ++t) {
    BinarySplit s;
    s.k = k;
    const Real* row = weak_probs.row(t);
    double pos = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      s.pos_indices.push_back(orders[t][i]);
      tg.mask.at(t, orders[t][i]) = 1.0f;
      pos += static_cast<double>(row[orders[t][i]]);
    }
    s.pos_mass = pos;
    s.neg_mass = 1.0 - pos;
    tg.weak_pos_mass.push_back(pos);
    tg.splits.push_back(std::move(s));
  }
  return tg;
}

// Consistency loss for one head: the strong branch's probability mass over
// the weak branch's positive set is pushed toward the weak positive mass via
// binary cross-entropy (clamped at 1e-8). Gradients flow only through
// `strong_logits`; the weak side enters as constants.
template <typename Real>
Var<Real> cbr_loss(Graph<Real>& g, Var<Real> strong_logits, const CbrTargets& targets) {
  const Tensor<Real>& L = g.val(strong_logits);
  const std::size_t T = L.rows(), C = L.cols();
  if (targets.mask.rows() != T || targets.mask.cols() != C) {
    throw ValidationError(format_msg("cbr_loss: weak/strong shape mismatch: mask ",
                                     targets.mask.shape_str(), " vs logits ", L.shape_str()));
  }
  Var<Real> probs = g.softmax(strong_logits);
  Var<Real> pos = g.row_sum(g.mul(probs, g.constant(targets.mask.template cast<Real>())));
  Tensor<Real> aw({T});
  for (std::size_t t = 0; t < T; ++t) aw[t] = static_cast<Real>(targets.weak_pos_mass[t]);
  return g.binary_cross_entropy(pos, aw);
}

// Total objective: supervised loss plus omega-weighted unlabeled loss.
inline double total_loss(double l_supervised, double l_unlabeled, double omega) {
  if (!std::isfinite(l_supervised) || !std::isfinite(l_unlabeled)) {
    throw NumericError("total_loss: non-finite component");
  }
  return l_supervised + omega * l_unlabeled;
}

}  // namespace melex
