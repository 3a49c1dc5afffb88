#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "melex/common.hpp"

namespace melex {

struct AudioClip {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  double seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }

  void validate(const char* ctx) const {
    if (samples.empty()) throw ValidationError(format_msg(ctx, ": empty audio clip"));
    if (sample_rate <= 0) throw ValidationError(format_msg(ctx, ": invalid sample rate"));
    for (float v : samples) {
      if (!std::isfinite(v)) throw ValidationError(format_msg(ctx, ": non-finite sample"));
    }
  }
};

inline double rms(const std::vector<float>& x) {
  double acc = 0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / std::max<std::size_t>(1, x.size()));
}

inline void clip_in_place(std::vector<float>& x) {
  for (float& v : x) v = std::clamp(v, -1.0f, 1.0f);
}

// Band-limited resampling with a Blackman-windowed sinc kernel.
// Output length is round(n * target / source).
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  clip.validate("resample");
  if (target_rate <= 0) throw ValidationError("resample: target rate must be positive");
  if (clip.sample_rate == target_rate) return clip;

  const double src = clip.sample_rate;
  const double ratio = static_cast<double>(target_rate) / src;
  const std::size_t n_in = clip.samples.size();
  const std::size_t n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_in) * ratio));

  // Cutoff in cycles per source sample, slightly under the narrower Nyquist.
  const double rolloff = 0.945;
  const double fc = 0.5 * std::min(1.0, ratio) * rolloff;
  const int lobes = 16;
  const double half_width = lobes / (2.0 * fc);
  const int hw = static_cast<int>(std::ceil(half_width));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) / ratio;
    const int j0 = static_cast<int>(std::floor(pos)) - hw;
    const int j1 = static_cast<int>(std::floor(pos)) + hw + 1;
    double acc = 0;
    for (int j = std::max(0, j0); j <= std::min<int>(static_cast<int>(n_in) - 1, j1); ++j) {
      const double x = pos - j;
      const double ax = std::abs(x);
      if (ax >= half_width) continue;
      double sinc;
      const double arg = 2.0 * 3.14159265358979323846 * fc * x;
      if (std::abs(arg) < 1e-12) {
        sinc = 2.0 * fc;
      } else {
        sinc = 2.0 * fc * std::sin(arg) / arg;
      }
      const double u = ax / half_width;  // [0,1)
      const double w = 0.42 + 0.5 * std::cos(3.14159265358979323846 * u) +
                       0.08 * std::cos(2.0 * 3.14159265358979323846 * u);
      acc += clip.samples[j] * sinc * w;
    }
    out.samples[i] = static_cast<float>(acc);
  }
  return out;
}

inline AudioClip downmix_to_mono(const std::vector<std::vector<float>>& channels,
                                 int sample_rate) {
  if (channels.empty()) throw ValidationError("downmix: no channels");
  AudioClip out;
  out.sample_rate = sample_rate;
  const std::size_t n = channels[0].size();
  out.samples.resize(n);
  const float inv = 1.0f / static_cast<float>(channels.size());
  for (std::size_t i = 0; i < n; ++i) {
    float acc = 0;
    for (const auto& ch : channels) acc += ch[i];
    out.samples[i] = acc * inv;
  }
  return out;
}

}  // namespace melex
