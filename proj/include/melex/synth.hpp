#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "melex/audio.hpp"
#include "melex/cfp.hpp"
#include "melex/common.hpp"

namespace melex {

// Synthetic "vocal over accompaniment" clips with exactly known f0
// trajectories; the desk-scale stand-in for real singing corpora.

enum class TrajectoryKind { kConstant, kGlide, kVibrato };

struct SynthSpec {
  double seconds = 2.0;
  double lead_silence = 0.25;
  double tail_silence = 0.25;
  TrajectoryKind kind = TrajectoryKind::kConstant;
  double f0_hz = 220.0;          // constant / vibrato center, glide start
  double glide_end_hz = 440.0;   // glide target
  double vibrato_depth_cents = 30.0;
  double vibrato_rate_hz = 5.0;
  int harmonics = 5;
  double harmonic_rolloff = 0.7;     // amplitude ratio between harmonics
  int accompaniment_tones = 3;       // 0 disables the chord pad
  double accompaniment_level_db = -14.0;  // relative to the vocal
  double noise_floor_db = -40.0;     // relative to the vocal; <= -200 disables
  double vocal_peak = 0.35;
};

// Instantaneous f0 at time t, 0 outside the voiced span.
inline double synth_f0_at(const SynthSpec& spec, double t) {
  if (t < spec.lead_silence || t >= spec.seconds - spec.tail_silence) return 0.0;
  const double voiced_span = spec.seconds - spec.lead_silence - spec.tail_silence;
  const double u = (t - spec.lead_silence) / voiced_span;
  switch (spec.kind) {
    case TrajectoryKind::kConstant:
      return spec.f0_hz;
    case TrajectoryKind::kGlide:
      return spec.f0_hz * std::pow(spec.glide_end_hz / spec.f0_hz, u);
    case TrajectoryKind::kVibrato:
      return spec.f0_hz *
             std::pow(2.0, spec.vibrato_depth_cents / 1200.0 *
                               std::sin(2.0 * 3.14159265358979323846 *
                                        spec.vibrato_rate_hz * (t - spec.lead_silence)));
  }
  return 0.0;
}

struct SynthResult {
  AudioClip clip;
  FrameLabels labels;
};

inline SynthResult synth_clip(const SynthSpec& spec, Rng& rng) {
  if (spec.seconds <= spec.lead_silence + spec.tail_silence) {
    throw ValidationError("synth_clip: silence margins cover the whole clip");
  }
  const std::size_t n = static_cast<std::size_t>(spec.seconds * kSampleRate);
  const std::size_t frames = (n + kHopSize - 1) / kHopSize;

  // range check over the exact trajectory
  for (std::size_t k = 0; k < frames; ++k) {
    const double f = synth_f0_at(spec, static_cast<double>(k) * kHopSeconds);
    if (f != 0.0 && (f < 62.0 || f > 1000.0)) {
      throw ValidationError(format_msg("synth_clip: trajectory leaves [62, 1000] Hz at ", f,
                                       " Hz"));
    }
  }

  std::vector<float> vocal(n, 0.0f);
  std::vector<double> harmonic_phase(static_cast<std::size_t>(spec.harmonics), 0.0);
  std::vector<double> harmonic_amp(static_cast<std::size_t>(spec.harmonics));
  for (int h = 0; h < spec.harmonics; ++h) {
    harmonic_amp[h] = std::pow(spec.harmonic_rolloff, h);
    harmonic_phase[h] = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  }
  double phase = 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double f = synth_f0_at(spec, t);
    if (f <= 0.0) continue;
    phase += 2.0 * 3.14159265358979323846 * f / kSampleRate;
    double v = 0.0;
    for (int h = 0; h < spec.harmonics; ++h) {
      v += harmonic_amp[h] * std::sin((h + 1) * phase + harmonic_phase[h]);
    }
    vocal[i] = static_cast<float>(v);
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.0) {
    const float scale = static_cast<float>(spec.vocal_peak / peak);
    for (float& v : vocal) v *= scale;
  }
  const double vocal_rms = rms(vocal);

  AudioClip clip;
  clip.sample_rate = kSampleRate;
  clip.samples = std::move(vocal);

  if (spec.accompaniment_tones > 0 && vocal_rms > 0.0) {
    const double level = vocal_rms * std::pow(10.0, spec.accompaniment_level_db / 20.0);
    for (int tone = 0; tone < spec.accompaniment_tones; ++tone) {
      // pad tones away from the vocal register edges
      const double f = rng.uniform(80.0, 500.0);
      const double ph = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      const double amp = level * 1.41421356 / std::sqrt(static_cast<double>(spec.accompaniment_tones));
      for (std::size_t i = 0; i < n; ++i) {
        clip.samples[i] += static_cast<float>(
            amp * std::sin(2.0 * 3.14159265358979323846 * f * i / kSampleRate + ph));
      }
    }
  }
  if (spec.noise_floor_db > -200.0 && vocal_rms > 0.0) {
    const double sigma = vocal_rms * std::pow(10.0, spec.noise_floor_db / 20.0);
    for (float& v : clip.samples) v += static_cast<float>(sigma * rng.normal());
  }
  clip_in_place(clip.samples);

  std::vector<double> hz(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    hz[k] = synth_f0_at(spec, static_cast<double>(k) * kHopSeconds);
  }
  return SynthResult{std::move(clip), FrameLabels::from_f0(hz)};
}

inline void write_f0_track(const std::string& path, const FrameLabels& labels) {
  std::ofstream out(path);
  if (!out) throw IoError(format_msg("cannot write label file: ", path));
  char buf[64];
  for (std::size_t k = 0; k < labels.frames(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.3f %.4f\n", static_cast<double>(k) * kHopSeconds,
                  labels.f0_hz[k]);
    out << buf;
  }
}

}  // namespace melex
