#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "melex/audio.hpp"
#include "melex/common.hpp"
#include "melex/fft.hpp"

namespace melex {

// Fixed front-end geometry: 8 kHz audio, 768-sample Hann window, 80-sample
// hop (10 ms frames), 320 log-frequency bins at 60 bins/octave from 31 Hz.
constexpr int kSampleRate = 8000;
constexpr std::size_t kWindowSize = 768;
constexpr std::size_t kHopSize = 80;
constexpr std::size_t kStftBins = kWindowSize / 2 + 1;  // 385
constexpr std::size_t kFreqBins = 320;
constexpr std::size_t kNumChannels = 3;
constexpr std::size_t kF0Classes = kFreqBins + 1;   // 321, class 0 = non-melody
constexpr std::size_t kNoteClasses = 64 + 1;        // 65, class 0 = non-melody
constexpr std::size_t kBinsPerNote = 5;             // 60 bins/octave / 12 semitones
constexpr double kBinsPerOctave = 60.0;
constexpr double kFreqMinHz = 31.0;
constexpr double kFreqMaxHz = 1250.0;
constexpr double kHopSeconds = static_cast<double>(kHopSize) / kSampleRate;  // 0.01

inline double bin_center_hz(std::size_t bin) {
  return kFreqMinHz * std::pow(2.0, static_cast<double>(bin) / kBinsPerOctave);
}

// --- class quantizers ---

inline int hz_to_f0_class(double f) {
  if (f < 0) throw ValidationError(format_msg("hz_to_f0_class: negative frequency ", f));
  if (f == 0) return 0;
  const double bin = std::round(kBinsPerOctave * std::log2(f / kFreqMinHz));
  const long clamped = std::clamp(static_cast<long>(bin), 0L, static_cast<long>(kFreqBins) - 1);
  return static_cast<int>(clamped) + 1;
}

inline double f0_class_to_hz(int cls) {
  if (cls < 0 || cls >= static_cast<int>(kF0Classes)) {
    throw ValidationError(format_msg("f0_class_to_hz: class ", cls, " out of range [0, 320]"));
  }
  if (cls == 0) return 0.0;
  return bin_center_hz(static_cast<std::size_t>(cls - 1));
}

inline int note_of_f0_class(int cls) {
  if (cls < 0 || cls >= static_cast<int>(kF0Classes)) {
    throw ValidationError(format_msg("note_of_f0_class: class ", cls, " out of range [0, 320]"));
  }
  if (cls == 0) return 0;
  return (cls - 1) / static_cast<int>(kBinsPerNote) + 1;
}

// --- frame labels ---

struct FrameLabels {
  std::vector<double> f0_hz;   // 0 = unvoiced
  std::vector<int> f0_class;   // 0..320
  std::vector<int> note_class; // 0..64
  bool empty_track_warning = false;

  std::size_t frames() const { return f0_hz.size(); }

  static FrameLabels from_f0(const std::vector<double>& hz) {
    FrameLabels l;
    l.f0_hz = hz;
    l.f0_class.resize(hz.size());
    l.note_class.resize(hz.size());
    for (std::size_t i = 0; i < hz.size(); ++i) {
      l.f0_class[i] = hz_to_f0_class(hz[i]);
      l.note_class[i] = note_of_f0_class(l.f0_class[i]);
    }
    return l;
  }
};

// Nearest-time sampling of an (time, f0) reference track onto the 10 ms
// frame grid. Frames farther from any track sample than the gap tolerance
// are unvoiced; an empty track yields all-unvoiced with a warning flag.
inline FrameLabels labels_from_track(const std::vector<double>& times,
                                     const std::vector<double>& f0s, std::size_t frames) {
  if (times.size() != f0s.size()) {
    throw ValidationError("labels_from_track: times/f0 length mismatch");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] < times[i - 1]) {
      throw ValidationError("labels_from_track: times must be nondecreasing");
    }
  }
  std::vector<double> hz(frames, 0.0);
  if (times.empty()) {
    FrameLabels l = FrameLabels::from_f0(hz);
    l.empty_track_warning = true;
    return l;
  }

  double gap_tol;
  if (times.size() >= 2) {
    std::vector<double> gaps;
    gaps.reserve(times.size() - 1);
    for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    gap_tol = std::max(1.5 * gaps[gaps.size() / 2], 0.75 * kHopSeconds);
  } else {
    gap_tol = 2.0 * kHopSeconds;
  }

  for (std::size_t k = 0; k < frames; ++k) {
    const double t = static_cast<double>(k) * kHopSeconds;
    auto it = std::lower_bound(times.begin(), times.end(), t);
    std::size_t best = it == times.end() ? times.size() - 1
                                         : static_cast<std::size_t>(it - times.begin());
    if (best > 0 && (it == times.end() || t - times[best - 1] <= times[best] - t)) {
      best -= 1;
    }
    if (std::abs(times[best] - t) <= gap_tol) hz[k] = f0s[best];
  }
  return FrameLabels::from_f0(hz);
}

// Two-column label file: time_seconds f0_hz (whitespace or comma separated,
// 0 = unvoiced, '#' comments).
inline void read_f0_track(const std::string& path, std::vector<double>& times,
                          std::vector<double>& f0s) {
  std::ifstream in(path);
  if (!in) throw IoError(format_msg("cannot open label file: ", path));
  times.clear();
  f0s.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (char& c : line) {
      if (c == ',' || c == '\t') c = ' ';
    }
    const auto first = line.find_first_not_of(' ');
    if (first == std::string::npos || line[first] == '#') continue;
    double t, f;
    if (std::sscanf(line.c_str(), "%lf %lf", &t, &f) != 2) {
      throw ValidationError(format_msg(path, ":", lineno, ": expected 'time f0'"));
    }
    if (f < 0) throw ValidationError(format_msg(path, ":", lineno, ": negative f0"));
    times.push_back(t);
    f0s.push_back(f);
  }
}

// --- STFT ---

struct Spectrogram {
  std::size_t frames = 0;
  // (frames, kStftBins) row-major
  std::vector<std::complex<double>> data;

  const std::complex<double>* frame(std::size_t t) const { return data.data() + t * kStftBins; }
};

// Hann-windowed, reflect-padded, centered STFT. T = ceil(n / hop).
inline Spectrogram stft(const AudioClip& clip) {
  clip.validate("stft");
  if (clip.sample_rate != kSampleRate) {
    throw ValidationError(format_msg("stft: expected ", kSampleRate, " Hz input, got ",
                                     clip.sample_rate));
  }
  const std::size_t n = clip.samples.size();
  if (n < kHopSize) {
    throw ValidationError(format_msg("stft: clip of ", n, " samples is shorter than one hop"));
  }
  const std::size_t T = (n + kHopSize - 1) / kHopSize;

  std::vector<double> window(kWindowSize);
  for (std::size_t i = 0; i < kWindowSize; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 *
                                     static_cast<double>(i) / kWindowSize);
  }

  // reflect padding (no edge repeat)
  auto sample_at = [&](long idx) -> double {
    const long nn = static_cast<long>(n);
    while (idx < 0 || idx >= nn) {
      if (idx < 0) idx = -idx;
      if (idx >= nn) idx = 2 * (nn - 1) - idx;
      if (nn == 1) return clip.samples[0];
    }
    return clip.samples[static_cast<std::size_t>(idx)];
  };

  static thread_local Fft plan(kWindowSize);
  Spectrogram spec;
  spec.frames = T;
  spec.data.resize(T * kStftBins);
  std::vector<std::complex<double>> buf(kWindowSize), out(kWindowSize);
  const long half = static_cast<long>(kWindowSize) / 2;
  for (std::size_t t = 0; t < T; ++t) {
    const long center = static_cast<long>(t * kHopSize);
    for (std::size_t i = 0; i < kWindowSize; ++i) {
      buf[i] = sample_at(center - half + static_cast<long>(i)) * window[i];
    }
    plan.forward(buf.data(), out.data());
    std::copy(out.begin(), out.begin() + kStftBins, spec.data.begin() + t * kStftBins);
  }
  return spec;
}

// --- CFP ---

struct CfpParams {
  double gamma_spec = 0.24;  // power compression on the power spectrogram
  double gamma_ceps = 0.6;   // compression on the rectified cepstrum
  bool per_clip_norm = true; // max-normalize each channel over the clip
};

// 3-channel log-frequency feature: power-scaled spectrogram, generalized
// cepstrum and their product, mapped to the 320-bin log axis.
struct CfpFeature {
  std::size_t frames = 0;
  double hop_seconds = kHopSeconds;
  std::vector<float> data;  // (3, 320, frames) row-major

  float& at(std::size_t ch, std::size_t bin, std::size_t t) {
    return data[(ch * kFreqBins + bin) * frames + t];
  }
  float at(std::size_t ch, std::size_t bin, std::size_t t) const {
    return data[(ch * kFreqBins + bin) * frames + t];
  }

  std::size_t argmax_bin(std::size_t ch, std::size_t t) const {
    std::size_t best = 0;
    float bv = at(ch, 0, t);
    for (std::size_t b = 1; b < kFreqBins; ++b) {
      if (at(ch, b, t) > bv) {
        bv = at(ch, b, t);
        best = b;
      }
    }
    return best;
  }
};

inline CfpFeature compute_cfp(const Spectrogram& spec, const CfpParams& params = {}) {
  const std::size_t T = spec.frames;
  CfpFeature f;
  f.frames = T;
  f.data.assign(kNumChannels * kFreqBins * T, 0.0f);

  const double df = static_cast<double>(kSampleRate) / kWindowSize;  // 10.416 Hz
  // spectral bins below 31 Hz are discarded; lags shorter than 1/1250 s and
  // longer than 1/31 s likewise
  const std::size_t k_min = static_cast<std::size_t>(std::ceil(kFreqMinHz / df));
  const std::size_t q_min =
      static_cast<std::size_t>(std::ceil(static_cast<double>(kSampleRate) / kFreqMaxHz));
  const std::size_t q_max = std::min<std::size_t>(
      kWindowSize / 2,
      static_cast<std::size_t>(std::floor(static_cast<double>(kSampleRate) / kFreqMinHz)));

  static thread_local Fft plan(kWindowSize);
  std::vector<double> pw(kStftBins);
  std::vector<std::complex<double>> full(kWindowSize), ceps_c(kWindowSize);
  std::vector<double> ceps(kWindowSize);

  std::vector<double> ch0(kFreqBins), ch1(kFreqBins);
  std::vector<double> maxv(kNumChannels, 0.0);

  for (std::size_t t = 0; t < T; ++t) {
    const std::complex<double>* x = spec.frame(t);
    // gamma-compressed power spectrum with the low-frequency cut
    for (std::size_t k = 0; k < kStftBins; ++k) {
      const double p = std::norm(x[k]);
      pw[k] = (k < k_min || p <= 0.0) ? 0.0 : std::pow(p, params.gamma_spec);
    }
    // two-sided extension -> generalized cepstrum (lag domain)
    for (std::size_t k = 0; k < kStftBins; ++k) full[k] = pw[k];
    for (std::size_t k = 1; k + 1 < kStftBins; ++k) full[kWindowSize - k] = pw[k];
    ceps_c = plan.inverse(full);
    for (std::size_t q = 0; q < kWindowSize; ++q) {
      const double v = ceps_c[q].real();
      ceps[q] = v > 0.0 ? std::pow(v, params.gamma_ceps) : 0.0;
    }
    for (std::size_t q = 0; q < std::min(q_min, kWindowSize); ++q) ceps[q] = 0.0;
    for (std::size_t q = q_max + 1; q < kWindowSize; ++q) ceps[q] = 0.0;

    // map both axes onto the log-frequency bins by linear interpolation
    // between neighboring native bins
    for (std::size_t b = 0; b < kFreqBins; ++b) {
      const double fc = bin_center_hz(b);
      const double kf = fc / df;
      const std::size_t k0 = static_cast<std::size_t>(kf);
      const double frac = kf - static_cast<double>(k0);
      ch0[b] = k0 + 1 < kStftBins ? pw[k0] * (1.0 - frac) + pw[k0 + 1] * frac : 0.0;

      const double qf = static_cast<double>(kSampleRate) / fc;
      const std::size_t q0 = static_cast<std::size_t>(qf);
      const double qfrac = qf - static_cast<double>(q0);
      ch1[b] = q0 + 1 < kWindowSize ? ceps[q0] * (1.0 - qfrac) + ceps[q0 + 1] * qfrac : 0.0;
    }
    for (std::size_t b = 0; b < kFreqBins; ++b) {
      const double prod = ch0[b] * ch1[b];
      f.at(0, b, t) = static_cast<float>(ch0[b]);
      f.at(1, b, t) = static_cast<float>(ch1[b]);
      f.at(2, b, t) = static_cast<float>(prod);
      maxv[0] = std::max(maxv[0], ch0[b]);
      maxv[1] = std::max(maxv[1], ch1[b]);
      maxv[2] = std::max(maxv[2], prod);
    }
  }

  if (params.per_clip_norm) {
    for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
      if (maxv[ch] <= 0.0) continue;
      const float inv = static_cast<float>(1.0 / maxv[ch]);
      float* base = f.data.data() + ch * kFreqBins * T;
      for (std::size_t i = 0; i < kFreqBins * T; ++i) base[i] *= inv;
    }
  }
  return f;
}

inline CfpFeature compute_cfp(const AudioClip& clip, const CfpParams& params = {}) {
  return compute_cfp(stft(clip), params);
}

inline CfpFeature crop_frames(const CfpFeature& f, std::size_t start, std::size_t len) {
  if (start + len > f.frames) throw ValidationError("crop_frames: range out of bounds");
  CfpFeature out;
  out.frames = len;
  out.hop_seconds = f.hop_seconds;
  out.data.resize(kNumChannels * kFreqBins * len);
  for (std::size_t ch = 0; ch < kNumChannels; ++ch) {
    for (std::size_t b = 0; b < kFreqBins; ++b) {
      const float* src = f.data.data() + (ch * kFreqBins + b) * f.frames + start;
      float* dst = out.data.data() + (ch * kFreqBins + b) * len;
      std::copy(src, src + len, dst);
    }
  }
  return out;
}

// --- feature cache ---
// Flat binary: magic "CFP1", u32 channels, u32 bins, u32 frames,
// f64 hop_seconds, then little-endian float32 data row-major.

inline void write_cfp_cache(const std::string& path, const CfpFeature& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(format_msg("cannot write feature cache: ", path));
  out.write("CFP1", 4);
  const std::uint32_t ch = kNumChannels, bins = kFreqBins,
                      frames = static_cast<std::uint32_t>(f.frames);
  out.write(reinterpret_cast<const char*>(&ch), 4);
  out.write(reinterpret_cast<const char*>(&bins), 4);
  out.write(reinterpret_cast<const char*>(&frames), 4);
  out.write(reinterpret_cast<const char*>(&f.hop_seconds), 8);
  out.write(reinterpret_cast<const char*>(f.data.data()),
            static_cast<std::streamsize>(f.data.size() * sizeof(float)));
  if (!out) throw IoError(format_msg("short write: ", path));
}

inline CfpFeature read_cfp_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(format_msg("cannot open feature cache: ", path));
  char magic[4];
  std::uint32_t ch = 0, bins = 0, frames = 0;
  double hop = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ch), 4);
  in.read(reinterpret_cast<char*>(&bins), 4);
  in.read(reinterpret_cast<char*>(&frames), 4);
  in.read(reinterpret_cast<char*>(&hop), 8);
  if (!in || std::memcmp(magic, "CFP1", 4) != 0) {
    throw IoError(format_msg("bad feature cache header: ", path));
  }
  if (ch != kNumChannels || bins != kFreqBins) {
    throw IoError(format_msg(path, ": cache geometry ", ch, "x", bins,
                             " does not match ", kNumChannels, "x", kFreqBins));
  }
  CfpFeature f;
  f.frames = frames;
  f.hop_seconds = hop;
  f.data.resize(static_cast<std::size_t>(ch) * bins * frames);
  in.read(reinterpret_cast<char*>(f.data.data()),
          static_cast<std::streamsize>(f.data.size() * sizeof(float)));
  if (!in) throw IoError(format_msg("truncated feature cache: ", path));
  return f;
}

}  // namespace melex
