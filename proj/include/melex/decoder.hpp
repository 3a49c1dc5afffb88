#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "melex/cfp.hpp"
#include "melex/common.hpp"
#include "melex/graph.hpp"
#include "melex/params.hpp"

namespace melex {

// Note-guided f0 decoding: two per-frame MLP heads, note-to-f0 expansion by
// row replication, attention-weighted refinement and the supervised loss.

template <typename Real>
void init_decoder_params(ParamStore<Real>& ps, std::size_t d_model, bool note_decoder,
                         Rng& rng) {
  auto uniform_init = [&](std::vector<std::size_t> shape, std::size_t fan_in) {
    Tensor<Real> t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    t.fill_uniform(rng, -bound, bound);
    return t;
  };
  ps.add("dec.f0.l1.w", uniform_init({d_model, d_model}, d_model));
  ps.add("dec.f0.l1.b", Tensor<Real>({d_model}));
  ps.add("dec.f0.l2.w", uniform_init({d_model, kF0Classes}, d_model));
  ps.add("dec.f0.l2.b", Tensor<Real>({kF0Classes}));
  if (note_decoder) {
    ps.add("dec.note.l1.w", uniform_init({d_model, d_model}, d_model));
    ps.add("dec.note.l1.b", Tensor<Real>({d_model}));
    ps.add("dec.note.l2.w", uniform_init({d_model, kNoteClasses}, d_model));
    ps.add("dec.note.l2.b", Tensor<Real>({kNoteClasses}));
    ps.add("dec.refine.w", uniform_init({kF0Classes, kF0Classes}, kF0Classes));
    ps.add("dec.refine.b", Tensor<Real>({kF0Classes}));
  }
}

template <typename Real>
Var<Real> mlp_head(Graph<Real>& g, const BoundParams<Real>& bp, const std::string& prefix,
                   Var<Real> x) {
  Var<Real> h = g.silu(g.linear(x, bp[prefix + ".l1.w"], bp[prefix + ".l1.b"]));
  return g.linear(h, bp[prefix + ".l2.w"], bp[prefix + ".l2.b"]);
}

// The f0-class -> note-class alignment map shared by expansion and labels.
inline const std::vector<std::size_t>& f0_to_note_index() {
  static const std::vector<std::size_t> idx = [] {
    std::vector<std::size_t> v(kF0Classes);
    for (std::size_t c = 0; c < kF0Classes; ++c) {
      v[c] = static_cast<std::size_t>(note_of_f0_class(static_cast<int>(c)));
    }
    return v;
  }();
  return idx;
}

// (T, 65) -> (T, 321): note column v replicated into the five f0 columns it
// covers; the non-melody column maps only to itself.
template <typename Real>
Var<Real> expand_note(Graph<Real>& g, Var<Real> note_logits) {
  return g.gather_cols(note_logits, f0_to_note_index());
}

// Refined prediction: per-frame softmax over the expanded note logits acts as
// attention over f0 classes; the weighted logits pass through one linear.
template <typename Real>
Var<Real> refine(Graph<Real>& g, const BoundParams<Real>& bp, Var<Real> note_expanded,
                 Var<Real> f0_logits) {
  Var<Real> weights = g.softmax(note_expanded);
  Var<Real> weighted = g.mul(weights, f0_logits);
  return g.linear(weighted, bp["dec.refine.w"], bp["dec.refine.b"]);
}

template <typename Real>
struct DecoderOut {
  Var<Real> f0_logits;      // (T, 321)
  Var<Real> note_logits;    // (T, 65); invalid when the note path is disabled
  Var<Real> f0_refined;     // (T, 321); == f0_logits when disabled
  bool has_note = false;
};

template <typename Real>
DecoderOut<Real> decode_heads(Graph<Real>& g, const BoundParams<Real>& bp, Var<Real> encoded,
                              bool note_decoder) {
  DecoderOut<Real> out;
  out.f0_logits = mlp_head(g, bp, "dec.f0", encoded);
  if (note_decoder) {
    out.note_logits = mlp_head(g, bp, "dec.note", encoded);
    out.f0_refined = refine(g, bp, expand_note(g, out.note_logits), out.f0_logits);
    out.has_note = true;
  } else {
    out.f0_refined = out.f0_logits;
  }
  return out;
}

template <typename Real>
Tensor<Real> one_hot_rows(const std::vector<int>& classes, std::size_t num_classes) {
  Tensor<Real> t({classes.size(), num_classes});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= static_cast<int>(num_classes)) {
      throw ValidationError(format_msg("label class ", classes[i], " out of range [0, ",
                                       num_classes - 1, "]"));
    }
    t.at(i, static_cast<std::size_t>(classes[i])) = Real(1);
  }
  return t;
}

template <typename Real>
struct SupervisedLoss {
  Var<Real> total;
  Var<Real> f0_term;
  Var<Real> note_term;  // invalid when the note path is disabled
  bool has_note = false;
};

// Frame-averaged cross-entropy on the refined f0 head plus the raw note head.
template <typename Real>
SupervisedLoss<Real> supervised_loss(Graph<Real>& g, const DecoderOut<Real>& out,
                                     const FrameLabels& labels) {
  const std::size_t T = g.val(out.f0_refined).rows();
  if (labels.frames() != T) {
    throw ValidationError(format_msg("supervised_loss: ", labels.frames(),
                                     " label frames vs ", T, " prediction frames"));
  }
  SupervisedLoss<Real> loss;
  loss.f0_term = g.cross_entropy(out.f0_refined,
                                 g.constant(one_hot_rows<Real>(labels.f0_class, kF0Classes)));
  if (out.has_note) {
    loss.note_term = g.cross_entropy(
        out.note_logits, g.constant(one_hot_rows<Real>(labels.note_class, kNoteClasses)));
    loss.total = g.add(loss.f0_term, loss.note_term);
    loss.has_note = true;
  } else {
    loss.total = loss.f0_term;
  }
  return loss;
}

// --- inference-side contour decoding ---

struct ContourPoint {
  bool voiced = false;
  double f0_hz = 0.0;
};

// Per-frame argmax over refined f0 logits; ties break toward the lower class.
template <typename Real>
std::vector<ContourPoint> decode_contour(const Tensor<Real>& f0_logits) {
  const std::size_t T = f0_logits.rows(), C = f0_logits.cols();
  if (C != kF0Classes) {
    throw ValidationError(format_msg("decode_contour: expected ", kF0Classes,
                                     " classes, got ", C));
  }
  std::vector<ContourPoint> contour(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Real* row = f0_logits.row(t);
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (row[c] > row[best]) best = c;
    }
    contour[t].voiced = best != 0;
    contour[t].f0_hz = f0_class_to_hz(static_cast<int>(best));
  }
  return contour;
}

// CSV rows "time_sec,f0_hz", 10 ms grid, three decimals, 0.000 = unvoiced.
inline void write_contour_csv(const std::string& path, const std::vector<ContourPoint>& contour,
                              double hop_seconds = kHopSeconds) {
  std::ofstream out(path);
  if (!out) throw IoError(format_msg("cannot write contour: ", path));
  char buf[64];
  for (std::size_t t = 0; t < contour.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f\n", static_cast<double>(t) * hop_seconds,
                  contour[t].voiced ? contour[t].f0_hz : 0.0);
    out << buf;
  }
  if (!out) throw IoError(format_msg("short write: ", path));
}

inline std::vector<ContourPoint> read_contour_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(format_msg("cannot open contour: ", path));
  std::vector<ContourPoint> contour;
  std::string line;
  while (std::getline(in, line)) {
    for (char& c : line) {
      if (c == ',') c = ' ';
    }
    double t, f;
    if (std::sscanf(line.c_str(), "%lf %lf", &t, &f) != 2) continue;  // tolerate headers
    contour.push_back({f > 0.0, f});
  }
  return contour;
}

}  // namespace melex
