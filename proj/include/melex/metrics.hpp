#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "melex/common.hpp"
#include "melex/decoder.hpp"

namespace melex {

// Frame-level melody evaluation: VR, VFA, RPA, RCA, OA over a 10 ms grid.
// Pitch is compared in cents relative to 10 Hz; the tolerance defaults to
// 50 cents; chroma folds the difference into [-600, 600].

struct ContourFrame {
  bool voiced = false;
  double cents = 0.0;  // defined only when voiced
};

inline double hz_to_cents(double f) { return 1200.0 * std::log2(f / 10.0); }

inline std::vector<ContourFrame> contour_frames(const std::vector<ContourPoint>& c) {
  std::vector<ContourFrame> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i].voiced = c[i].voiced && c[i].f0_hz > 0.0;
    if (out[i].voiced) out[i].cents = hz_to_cents(c[i].f0_hz);
  }
  return out;
}

inline std::vector<ContourFrame> contour_from_labels(const FrameLabels& labels) {
  std::vector<ContourFrame> out(labels.frames());
  for (std::size_t i = 0; i < labels.frames(); ++i) {
    out[i].voiced = labels.f0_hz[i] > 0.0;
    if (out[i].voiced) out[i].cents = hz_to_cents(labels.f0_hz[i]);
  }
  return out;
}

struct EvalReport {
  // category counts
  std::size_t voiced_ref = 0;
  std::size_t unvoiced_ref = 0;
  std::size_t vr_hits = 0;   // voiced est on voiced ref
  std::size_t vfa_hits = 0;  // voiced est on unvoiced ref
  std::size_t rpa_hits = 0;  // pitch within tolerance on voiced ref
  std::size_t rca_hits = 0;  // chroma within tolerance on voiced ref
  std::size_t oa_hits = 0;   // voicing-and-pitch correct frames

  std::size_t total() const { return voiced_ref + unvoiced_ref; }
  bool has_voiced() const { return voiced_ref > 0; }
  bool has_unvoiced() const { return unvoiced_ref > 0; }

  std::optional<double> vr() const {
    if (!has_voiced()) return std::nullopt;
    return 100.0 * static_cast<double>(vr_hits) / static_cast<double>(voiced_ref);
  }
  std::optional<double> vfa() const {
    if (!has_unvoiced()) return std::nullopt;
    return 100.0 * static_cast<double>(vfa_hits) / static_cast<double>(unvoiced_ref);
  }
  std::optional<double> rpa() const {
    if (!has_voiced()) return std::nullopt;
    return 100.0 * static_cast<double>(rpa_hits) / static_cast<double>(voiced_ref);
  }
  std::optional<double> rca() const {
    if (!has_voiced()) return std::nullopt;
    return 100.0 * static_cast<double>(rca_hits) / static_cast<double>(voiced_ref);
  }
  double oa() const {
    return total() == 0 ? 0.0 : 100.0 * static_cast<double>(oa_hits) / static_cast<double>(total());
  }
};

// Nearest-neighbor alignment of est onto ref's time base; both sides share
// the 10 ms grid here, so this is an index clamp.
inline std::vector<ContourFrame> align_to(const std::vector<ContourFrame>& est,
                                          std::size_t frames) {
  std::vector<ContourFrame> out(frames);
  if (est.empty()) return out;
  for (std::size_t i = 0; i < frames; ++i) {
    out[i] = est[std::min(i, est.size() - 1)];
  }
  return out;
}

inline EvalReport evaluate(const std::vector<ContourFrame>& ref,
                           const std::vector<ContourFrame>& est_in,
                           double tolerance_cents = 50.0) {
  if (ref.empty()) throw ValidationError("evaluate: empty reference contour");
  const std::vector<ContourFrame> est = align_to(est_in, ref.size());
  EvalReport r;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i].voiced) {
      r.voiced_ref += 1;
      if (est[i].voiced) r.vr_hits += 1;
      bool pitch_ok = false, chroma_ok = false;
      if (est[i].voiced) {  // an unvoiced estimate carries no pitch
        const double d = est[i].cents - ref[i].cents;
        pitch_ok = std::abs(d) <= tolerance_cents;
        double folded = std::fmod(d, 1200.0);
        if (folded > 600.0) folded -= 1200.0;
        if (folded < -600.0) folded += 1200.0;
        chroma_ok = std::abs(folded) <= tolerance_cents;
      }
      if (pitch_ok) r.rpa_hits += 1;
      if (chroma_ok) r.rca_hits += 1;
      if (pitch_ok && est[i].voiced) r.oa_hits += 1;
    } else {
      r.unvoiced_ref += 1;
      if (est[i].voiced) r.vfa_hits += 1;
      if (!est[i].voiced) r.oa_hits += 1;
    }
  }
  return r;
}

// Frame-weighted aggregation: pool the category counts and recompute.
inline EvalReport aggregate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ValidationError("aggregate: no reports");
  EvalReport out;
  for (const auto& r : reports) {
    out.voiced_ref += r.voiced_ref;
    out.unvoiced_ref += r.unvoiced_ref;
    out.vr_hits += r.vr_hits;
    out.vfa_hits += r.vfa_hits;
    out.rpa_hits += r.rpa_hits;
    out.rca_hits += r.rca_hits;
    out.oa_hits += r.oa_hits;
  }
  return out;
}

// {"vr":..,"vfa":..,"rpa":..,"rca":..,"oa":..,"frames":..}, two-decimal
// percentages; metrics whose denominator is empty are omitted.
inline std::string report_json(const EvalReport& r) {
  std::string out = "{";
  char buf[64];
  auto put = [&](const char* key, std::optional<double> v) {
    if (!v) return;
    std::snprintf(buf, sizeof(buf), "\"%s\":%.2f,", key, *v);
    out += buf;
  };
  put("vr", r.vr());
  put("vfa", r.vfa());
  put("rpa", r.rpa());
  put("rca", r.rca());
  put("oa", r.oa());
  std::snprintf(buf, sizeof(buf), "\"frames\":%zu}", r.total());
  out += buf;
  return out;
}

}  // namespace melex
