#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>

#include "melex/cfp.hpp"
#include "melex/fft.hpp"
#include "melex/wav.hpp"

using namespace melex;

namespace {

constexpr double kPi = 3.14159265358979323846;

AudioClip make_sine(double freq, double seconds, int rate, double amp = 0.5) {
  AudioClip c;
  c.sample_rate = rate;
  const std::size_t n = static_cast<std::size_t>(seconds * rate);
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(amp * std::sin(2.0 * kPi * freq * i / rate));
  }
  return c;
}

// Naive DFT magnitude at bin k; the independent oracle for FFT and peaks.
double dft_mag(const std::vector<float>& x, std::size_t k) {
  std::complex<double> acc = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double a = -2.0 * kPi * static_cast<double>(k) * n / x.size();
    acc += static_cast<double>(x[n]) * std::complex<double>(std::cos(a), std::sin(a));
  }
  return std::abs(acc);
}

TEST(Fft, MatchesNaiveDftOnMixedRadixSizes) {
  Rng rng(1);
  for (std::size_t n : {2u, 3u, 6u, 8u, 12u, 48u, 768u}) {
    Fft plan(n);
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto y = plan.forward(x);
    // naive DFT on a few bins
    for (std::size_t k = 0; k < std::min<std::size_t>(n, 5); ++k) {
      std::complex<double> acc = 0;
      for (std::size_t m = 0; m < n; ++m) {
        const double a = -2.0 * kPi * static_cast<double>(k) * m / n;
        acc += x[m] * std::complex<double>(std::cos(a), std::sin(a));
      }
      EXPECT_NEAR(std::abs(y[k] - acc), 0.0, 1e-9 * n);
    }
    // inverse round trip
    auto back = plan.inverse(y);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(std::abs(back[i] - x[i]), 0.0, 1e-10 * n);
    }
  }
}

TEST(Fft, RejectsUnsupportedSizes) {
  EXPECT_THROW(Fft(5), ValidationError);
  EXPECT_THROW(Fft(0), ValidationError);
}

TEST(Resample, SameRateIsIdentity) {
  auto c = make_sine(440, 0.1, 8000);
  auto r = resample(c, 8000);
  ASSERT_EQ(r.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    EXPECT_EQ(r.samples[i], c.samples[i]);
  }
}

TEST(Resample, PreservesToneFrom44100) {
  auto c = make_sine(440, 1.0, 44100);
  auto r = resample(c, 8000);
  EXPECT_EQ(r.samples.size(), 8000u);
  // dominant DFT bin at 440 Hz +- 1 bin (1 Hz resolution over 1 s)
  std::size_t best = 0;
  double bv = -1;
  for (std::size_t k = 1; k < 4000; ++k) {
    const double m = dft_mag(r.samples, k);
    if (m > bv) {
      bv = m;
      best = k;
    }
  }
  EXPECT_NEAR(static_cast<double>(best), 440.0, 1.0);
}

TEST(Resample, SuppressesEnergyAboveNewNyquist) {
  auto c = make_sine(5000, 0.5, 16000);
  auto r = resample(c, 8000);
  double ein = 0, eout = 0;
  for (float v : c.samples) ein += static_cast<double>(v) * v;
  for (float v : r.samples) eout += static_cast<double>(v) * v;
  EXPECT_LT(eout, 0.01 * ein);
}

TEST(Resample, RejectsEmptyInput) {
  AudioClip c;
  c.sample_rate = 8000;
  EXPECT_THROW(resample(c, 4000), ValidationError);
}

TEST(Stft, ZeroSignalGivesZeroSpectrogram) {
  AudioClip c;
  c.sample_rate = kSampleRate;
  c.samples.assign(800, 0.0f);
  auto s = stft(c);
  EXPECT_EQ(s.frames, 10u);
  for (const auto& v : s.data) EXPECT_EQ(std::abs(v), 0.0);
}

TEST(Stft, SinePeaksAtExpectedBin) {
  // 1000 Hz -> bin 1000 * 768 / 8000 = 96
  auto c = make_sine(1000, 0.5, kSampleRate);
  auto s = stft(c);
  for (std::size_t t = 2; t + 2 < s.frames; ++t) {
    std::size_t best = 0;
    double bv = -1;
    for (std::size_t k = 0; k < kStftBins; ++k) {
      const double m = std::abs(s.frame(t)[k]);
      if (m > bv) {
        bv = m;
        best = k;
      }
    }
    EXPECT_EQ(best, 96u);
  }
}

TEST(Stft, ParsevalWithinOnePercent) {
  Rng rng(7);
  AudioClip c;
  c.sample_rate = kSampleRate;
  c.samples.resize(4000);
  for (auto& v : c.samples) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  auto s = stft(c);

  // independent accumulation of windowed-frame energy
  std::vector<double> window(kWindowSize);
  for (std::size_t i = 0; i < kWindowSize; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kWindowSize);
  }
  auto sample_at = [&](long idx) -> double {
    const long nn = static_cast<long>(c.samples.size());
    while (idx < 0 || idx >= nn) {
      if (idx < 0) idx = -idx;
      if (idx >= nn) idx = 2 * (nn - 1) - idx;
    }
    return c.samples[static_cast<std::size_t>(idx)];
  };
  double frame_energy = 0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    const long center = static_cast<long>(t * kHopSize);
    for (std::size_t i = 0; i < kWindowSize; ++i) {
      const double v = sample_at(center - 384 + static_cast<long>(i)) * window[i];
      frame_energy += v * v;
    }
  }

  double spec_energy = 0;
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t k = 0; k < kStftBins; ++k) {
      const double w = (k == 0 || k == kStftBins - 1) ? 1.0 : 2.0;
      spec_energy += w * std::norm(s.frame(t)[k]);
    }
  }
  spec_energy /= static_cast<double>(kWindowSize);
  EXPECT_NEAR(spec_energy / frame_energy, 1.0, 0.01);
}

TEST(Stft, RejectsShortClipAndWrongRate) {
  AudioClip c;
  c.sample_rate = kSampleRate;
  c.samples.assign(40, 0.1f);
  EXPECT_THROW(stft(c), ValidationError);
  c.samples.assign(800, 0.1f);
  c.sample_rate = 44100;
  EXPECT_THROW(stft(c), ValidationError);
}

TEST(Cfp, SilenceGivesZeros) {
  AudioClip c;
  c.sample_rate = kSampleRate;
  c.samples.assign(1600, 0.0f);
  auto f = compute_cfp(c);
  EXPECT_EQ(f.frames, 20u);
  for (float v : f.data) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Cfp, PureSinePeaksAtItsLogBin) {
  // 440 Hz -> bin round(60*log2(440/31)) = 230
  auto c = make_sine(440, 1.0, kSampleRate);
  auto f = compute_cfp(c);
  std::size_t hits = 0, total = 0;
  for (std::size_t t = 3; t + 3 < f.frames; ++t) {
    const std::size_t am = f.argmax_bin(2, t);
    total += 1;
    if (am >= 229 && am <= 231) hits += 1;
  }
  EXPECT_GE(static_cast<double>(hits) / total, 0.95);
}

TEST(Cfp, HarmonicToneResolvesToFundamental) {
  // f0 = 220 Hz with strong 2nd/3rd harmonics; the spectral channel may peak
  // at a harmonic but the product channel must peak at bin 170.
  AudioClip c;
  c.sample_rate = kSampleRate;
  const std::size_t n = 8000;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    const double v = 0.25 * std::sin(2 * kPi * 220 * t) +
                     0.35 * std::sin(2 * kPi * 440 * t + 0.7) +
                     0.30 * std::sin(2 * kPi * 660 * t + 1.9);
    c.samples[i] = static_cast<float>(v);
  }
  auto f = compute_cfp(c);
  std::size_t hits = 0, total = 0;
  for (std::size_t t = 3; t + 3 < f.frames; ++t) {
    const std::size_t am = f.argmax_bin(2, t);
    total += 1;
    if (am >= 169 && am <= 171) hits += 1;
  }
  EXPECT_GE(static_cast<double>(hits) / total, 0.95);
}

TEST(Cfp, ShapeAndRangeInvariants) {
  auto c = make_sine(300, 0.33, kSampleRate);
  auto f = compute_cfp(c);
  EXPECT_EQ(f.frames, (c.samples.size() + kHopSize - 1) / kHopSize);
  EXPECT_EQ(f.data.size(), kNumChannels * kFreqBins * f.frames);
  float mx = 0;
  for (float v : f.data) {
    EXPECT_GE(v, 0.0f);
    mx = std::max(mx, v);
  }
  EXPECT_LE(mx, 1.0f + 1e-6f);
}

TEST(Quantizer, HandValues) {
  EXPECT_EQ(hz_to_f0_class(0), 0);
  EXPECT_EQ(hz_to_f0_class(31), 1);
  EXPECT_EQ(hz_to_f0_class(62), 61);  // one octave = 60 bins
  EXPECT_EQ(hz_to_f0_class(440), 231);
  EXPECT_THROW(hz_to_f0_class(-1), ValidationError);
  // clamping at the edges
  EXPECT_EQ(hz_to_f0_class(10), 1);
  EXPECT_EQ(hz_to_f0_class(5000), 320);
}

TEST(Quantizer, InverseAndRoundTrip) {
  EXPECT_EQ(f0_class_to_hz(0), 0.0);
  EXPECT_DOUBLE_EQ(f0_class_to_hz(1), 31.0);
  for (int cls = 0; cls <= 320; ++cls) {
    EXPECT_EQ(hz_to_f0_class(f0_class_to_hz(cls)), cls);
  }
  EXPECT_THROW(f0_class_to_hz(321), ValidationError);
  EXPECT_THROW(f0_class_to_hz(-1), ValidationError);
}

TEST(Quantizer, Monotonicity) {
  Rng rng(17);
  for (int it = 0; it < 500; ++it) {
    double f1 = rng.uniform(31.0, 1249.0);
    double f2 = rng.uniform(31.0, 1249.0);
    if (f1 > f2) std::swap(f1, f2);
    EXPECT_LE(hz_to_f0_class(f1), hz_to_f0_class(f2));
  }
}

TEST(Quantizer, ErrorWithinHalfBin) {
  Rng rng(19);
  for (int it = 0; it < 500; ++it) {
    const double f = rng.uniform(31.0, 1235.0);
    const double fhat = f0_class_to_hz(hz_to_f0_class(f));
    EXPECT_LE(std::abs(1200.0 * std::log2(fhat / f)), 10.0 + 1e-9);
  }
}

TEST(NoteMapping, FiveBinsPerNote) {
  EXPECT_EQ(note_of_f0_class(0), 0);
  for (int cls = 1; cls <= 5; ++cls) EXPECT_EQ(note_of_f0_class(cls), 1);
  for (int cls = 6; cls <= 10; ++cls) EXPECT_EQ(note_of_f0_class(cls), 2);
  EXPECT_EQ(note_of_f0_class(320), 64);
  // group boundaries at cls == 1 (mod 5)
  for (int cls = 1; cls < 320; ++cls) {
    if (cls % 5 == 0) {
      EXPECT_EQ(note_of_f0_class(cls + 1), note_of_f0_class(cls) + 1);
    } else {
      EXPECT_EQ(note_of_f0_class(cls + 1), note_of_f0_class(cls));
    }
  }
}

TEST(Labels, ConstantTrack) {
  std::vector<double> times, f0s;
  for (int i = 0; i < 100; ++i) {
    times.push_back(i * 0.01);
    f0s.push_back(440.0);
  }
  auto l = labels_from_track(times, f0s, 100);
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_EQ(l.f0_class[k], 231);
    EXPECT_EQ(l.note_class[k], 47);  // floor(230/5)+1
  }
  EXPECT_FALSE(l.empty_track_warning);
}

TEST(Labels, EmptyTrackIsAllUnvoicedWithWarning) {
  auto l = labels_from_track({}, {}, 50);
  EXPECT_TRUE(l.empty_track_warning);
  for (std::size_t k = 0; k < 50; ++k) EXPECT_EQ(l.f0_class[k], 0);
}

TEST(Labels, FineTrackSubsamplesExactly) {
  // 5 ms track onto the 10 ms grid keeps every other value exactly
  std::vector<double> times, f0s;
  for (int i = 0; i < 200; ++i) {
    times.push_back(i * 0.005);
    f0s.push_back(200.0 + i);
  }
  auto l = labels_from_track(times, f0s, 100);
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_DOUBLE_EQ(l.f0_hz[k], f0s[2 * k]);
  }
}

TEST(Labels, GapsBecomeUnvoiced) {
  // samples at 10 ms spacing with a hole between 0.2 s and 0.5 s
  std::vector<double> times, f0s;
  for (int i = 0; i <= 20; ++i) {
    times.push_back(i * 0.01);
    f0s.push_back(330.0);
  }
  for (int i = 50; i <= 70; ++i) {
    times.push_back(i * 0.01);
    f0s.push_back(330.0);
  }
  auto l = labels_from_track(times, f0s, 71);
  EXPECT_GT(l.f0_hz[10], 0.0);
  EXPECT_EQ(l.f0_hz[35], 0.0);  // middle of the hole
  EXPECT_GT(l.f0_hz[60], 0.0);
}

TEST(Labels, VoicingInvariant) {
  std::vector<double> times = {0.0, 0.01, 0.02, 0.03};
  std::vector<double> f0s = {0.0, 440.0, 0.0, 200.0};
  auto l = labels_from_track(times, f0s, 4);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(l.f0_class[k] == 0, l.note_class[k] == 0);
    EXPECT_EQ(l.f0_class[k] == 0, l.f0_hz[k] == 0.0);
  }
}

TEST(FeatureCache, RoundTripIsExact) {
  auto c = make_sine(440, 0.2, kSampleRate);
  auto f = compute_cfp(c);
  const std::string path = std::filesystem::temp_directory_path() / "melex_cache_test.cfp";
  write_cfp_cache(path, f);
  auto g = read_cfp_cache(path);
  EXPECT_EQ(g.frames, f.frames);
  EXPECT_EQ(g.hop_seconds, f.hop_seconds);
  ASSERT_EQ(g.data.size(), f.data.size());
  for (std::size_t i = 0; i < f.data.size(); ++i) EXPECT_EQ(g.data[i], f.data[i]);
  std::filesystem::remove(path);
}

TEST(Wav, FloatRoundTripIsExact) {
  auto c = make_sine(523.25, 0.1, kSampleRate, 0.3);
  const std::string path = std::filesystem::temp_directory_path() / "melex_wav_test.wav";
  write_wav(path, c);
  auto r = read_wav(path);
  EXPECT_EQ(r.sample_rate, c.sample_rate);
  ASSERT_EQ(r.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) EXPECT_EQ(r.samples[i], c.samples[i]);
  std::filesystem::remove(path);
}

TEST(Wav, ReadsPcm16Stereo) {
  // hand-built 16-bit stereo file: L = 16384, R = -16384 -> downmix 0
  std::vector<unsigned char> b = {'R', 'I', 'F', 'F', 0, 0, 0, 0, 'W', 'A', 'V', 'E',
                                  'f', 'm', 't', ' ', 16, 0, 0, 0};
  auto put16 = [&](std::uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
  };
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  };
  put16(1);      // PCM
  put16(2);      // stereo
  put32(8000);   // rate
  put32(32000);  // byte rate
  put16(4);      // block align
  put16(16);     // bits
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(16);  // 4 frames
  for (int i = 0; i < 4; ++i) {
    put16(16384);
    put16(static_cast<std::uint16_t>(-16384));
  }
  b[4] = static_cast<unsigned char>(b.size() - 8);
  const std::string path = std::filesystem::temp_directory_path() / "melex_pcm16.wav";
  std::ofstream(path, std::ios::binary)
      .write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  auto c = read_wav(path);
  EXPECT_EQ(c.sample_rate, 8000);
  ASSERT_EQ(c.samples.size(), 4u);
  for (float v : c.samples) EXPECT_NEAR(v, 0.0f, 1e-7f);
  std::filesystem::remove(path);
}

TEST(Wav, MissingFileIsIoError) {
  EXPECT_THROW(read_wav("/nonexistent/file.wav"), IoError);
}

}  // namespace
