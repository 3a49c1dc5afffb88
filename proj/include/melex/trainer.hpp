#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include <sys/resource.h>

#include "melex/adam.hpp"
#include "melex/attention_ref.hpp"
#include "melex/cbr.hpp"
#include "melex/checkpoint.hpp"
#include "melex/config.hpp"
#include "melex/metrics.hpp"
#include "melex/model.hpp"
#include "melex/wav.hpp"

namespace melex {

// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
// must be written to per-index slots; any exception is rethrown on the
// caller's thread.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct LabeledClip {
  CfpFeature feature;
  FrameLabels labels;
};

struct TrainLogRow {
  std::size_t step = 0;
  double l_supervised = 0.0;
  double l_f0_cbr = 0.0;
  double l_note_cbr = 0.0;
  double l_total = 0.0;
  double mu_f0 = 0.0;
  double mu_note = 0.0;
};

inline void write_loss_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError(format_msg("cannot write loss log: ", path));
  out << "step,L_l,L_f0_cbr,L_note_cbr,L_total,mu_f0,mu_note\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step,
                  r.l_supervised, r.l_f0_cbr, r.l_note_cbr, r.l_total, r.mu_f0, r.mu_note);
    out << buf;
  }
}

inline AudioClip load_audio_resampled(const std::string& path) {
  AudioClip clip = read_wav(path);
  if (clip.sample_rate != kSampleRate) clip = resample(clip, kSampleRate);
  return clip;
}

inline LabeledClip load_labeled_clip(const ManifestEntry& entry, const std::string& cache_dir) {
  LabeledClip out;
  std::string cache_path;
  if (!cache_dir.empty()) {
    cache_path = (std::filesystem::path(cache_dir) /
                  (std::filesystem::path(entry.audio).filename().string() + ".cfp"))
                     .string();
  }
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    out.feature = read_cfp_cache(cache_path);
  } else {
    out.feature = compute_cfp(load_audio_resampled(entry.audio));
    if (!cache_path.empty()) {
      std::filesystem::create_directories(cache_dir);
      write_cfp_cache(cache_path, out.feature);
    }
  }
  std::vector<double> times, f0s;
  read_f0_track(entry.labels, times, f0s);
  out.labels = labels_from_track(times, f0s, out.feature.frames);
  return out;
}

// One training process: owns the model, optimizer and confidence state.
// Per-step randomness derives statelessly from (seed, step), so runs are
// reproducible and worker scheduling cannot change results.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const DatasetManifest& labeled,
          const DatasetManifest* unlabeled)
      : cfg_(cfg), model_(cfg.model_config(), cfg.seed) {
    cfg_.validate();
    confidence_.mu_f0 = cfg.confidence_init;
    confidence_.mu_note = cfg.confidence_init;
    confidence_.momentum = cfg.confidence_momentum;

    for (const auto& e : labeled.entries) {
      if (e.split != "train") continue;
      if (!e.labeled()) {
        throw ValidationError(format_msg("labeled manifest entry without labels: ", e.audio));
      }
      labeled_.push_back(load_labeled_clip(e, cfg.cache_dir));
    }
    if (labeled_.empty()) {
      throw ValidationError("training needs at least one labeled clip in split 'train'");
    }
    if (unlabeled && !cfg.no_cbr) {
      for (const auto& e : unlabeled->entries) {
        unlabeled_.push_back(load_audio_resampled(e.audio));
      }
    }
    adam_ = AdamState<float>::like(model_.params());
    adam_cfg_.lr = cfg.learning_rate;
  }

  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  const ConfidenceState& confidence() const { return confidence_; }
  const std::vector<TrainLogRow>& log() const { return log_; }
  std::size_t step() const { return step_; }
  const std::vector<LabeledClip>& labeled_clips() const { return labeled_; }
  bool semi_supervised() const { return !cfg_.no_cbr && !unlabeled_.empty(); }

  // Runs `n` steps. Aborts (keeping previously written checkpoints) if a
  // non-finite loss or gradient surfaces.
  void run(std::size_t n, const std::string& out_dir = "") {
    for (std::size_t i = 0; i < n; ++i) {
      const TrainLogRow row = train_step();
      log_.push_back(row);
      if (!out_dir.empty() && cfg_.checkpoint_every > 0 &&
          step_ % cfg_.checkpoint_every == 0) {
        save(checkpoint_path(out_dir, step_));
      }
    }
  }

  void save(const std::string& path) const {
    CheckpointMeta meta;
    meta.step = step_;
    meta.confidence = confidence_;
    meta.config = cfg_.to_json();
    save_checkpoint(path, model_.params(), adam_, meta);
  }

  static std::string checkpoint_path(const std::string& out_dir, std::size_t step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%06zu.bin", step);
    return (std::filesystem::path(out_dir) / buf).string();
  }

  TrainLogRow train_step() {
    const std::size_t s = step_ + 1;

    struct ClipResult {
      std::vector<Tensor<float>> grads;
      double loss = 0.0;
      double weight = 0.0;  // frame count
    };

    // ---- labeled batch ----
    Rng batch_rng(mix_seed(cfg_.seed, s, 1));
    const std::size_t bl = std::min(cfg_.batch_labeled, labeled_.size());
    std::vector<std::size_t> picks(bl);
    std::vector<std::size_t> crops(bl);
    for (std::size_t i = 0; i < bl; ++i) {
      picks[i] = static_cast<std::size_t>(batch_rng.below(labeled_.size()));
      const std::size_t frames = labeled_[picks[i]].feature.frames;
      crops[i] = frames > cfg_.crop_frames
                     ? static_cast<std::size_t>(batch_rng.below(frames - cfg_.crop_frames + 1))
                     : 0;
    }

    std::vector<ClipResult> lab(bl);
    parallel_for(bl, [&](std::size_t i) {
      const LabeledClip& clip = labeled_[picks[i]];
      const std::size_t len = std::min(cfg_.crop_frames, clip.feature.frames);
      CfpFeature feature = crop_frames(clip.feature, crops[i], len);
      FrameLabels labels;
      labels.f0_hz.assign(clip.labels.f0_hz.begin() + crops[i],
                          clip.labels.f0_hz.begin() + crops[i] + len);
      labels.f0_class.assign(clip.labels.f0_class.begin() + crops[i],
                             clip.labels.f0_class.begin() + crops[i] + len);
      labels.note_class.assign(clip.labels.note_class.begin() + crops[i],
                               clip.labels.note_class.begin() + crops[i] + len);

      Graph<float> g;
      auto run = model_.forward(g, feature);
      auto loss = supervised_loss(g, run.out, labels);
      g.backward(loss.total);
      lab[i].grads = collect_grads(g, run.bound);
      lab[i].loss = g.val(loss.total)[0];
      lab[i].weight = static_cast<double>(len);
    });

    // frame-weighted pooling over the batch
    double lab_weight = 0.0;
    for (const auto& r : lab) lab_weight += r.weight;
    std::vector<Tensor<float>> grads = zero_grads();
    double l_supervised = 0.0;
    for (const auto& r : lab) {
      const float w = static_cast<float>(r.weight / lab_weight);
      l_supervised += r.loss * (r.weight / lab_weight);
      axpy(grads, r.grads, w);
    }

    // ---- unlabeled batch ----
    double l_f0_cbr = 0.0, l_note_cbr = 0.0;
    if (semi_supervised() && cfg_.batch_unlabeled > 0) {
      const std::size_t bu = std::min(cfg_.batch_unlabeled, unlabeled_.size());
      std::vector<std::size_t> upicks(bu);
      for (std::size_t i = 0; i < bu; ++i) {
        upicks[i] = static_cast<std::size_t>(batch_rng.below(unlabeled_.size()));
      }

      struct UnlabResult {
        std::vector<Tensor<float>> grads;
        double f0_loss = 0.0, note_loss = 0.0;
        double f0_pos_sum = 0.0, note_pos_sum = 0.0;
        double weight = 0.0;
      };
      std::vector<UnlabResult> unlab(bu);
      const bool note = !cfg_.no_note_decoder;
      parallel_for(bu, [&](std::size_t i) {
        const AudioClip& raw = unlabeled_[upicks[i]];
        Rng weak_rng(mix_seed(cfg_.seed, s, 1000 + upicks[i] * 2));
        Rng strong_rng(mix_seed(cfg_.seed, s, 1000 + upicks[i] * 2 + 1));
        AudioClip weak = weak_augment(raw, cfg_.augmentation.weak, weak_rng);
        AudioClip strong = strong_augment(raw, cfg_.augmentation.strong, strong_rng);
        strong.samples.resize(raw.samples.size());  // keep branch frame counts aligned

        CfpFeature weak_f = compute_cfp(weak);
        CfpFeature strong_f = compute_cfp(strong);
        std::size_t len = std::min(weak_f.frames, cfg_.crop_frames);
        std::size_t start = 0;
        if (weak_f.frames > len) {
          Rng crop_rng(mix_seed(cfg_.seed, s, 2000 + upicks[i]));
          start = static_cast<std::size_t>(crop_rng.below(weak_f.frames - len + 1));
        }
        weak_f = crop_frames(weak_f, start, len);
        strong_f = crop_frames(strong_f, start, len);

        // weak branch: detached probabilities
        Tensor<float> weak_f0_probs, weak_note_probs;
        {
          Graph<float> g(false);
          auto run = model_.forward(g, weak_f);
          weak_f0_probs = g.val(g.softmax(run.out.f0_refined));
          if (note) weak_note_probs = g.val(g.softmax(run.out.note_logits));
        }
        CbrTargets f0_targets = cfg_.cbr_global_k
                                    ? cbr_targets_from_weak_global_k(weak_f0_probs,
                                                                     confidence_.mu_f0)
                                    : cbr_targets_from_weak(weak_f0_probs, confidence_.mu_f0);
        CbrTargets note_targets;
        if (note) {
          note_targets = cfg_.cbr_global_k
                             ? cbr_targets_from_weak_global_k(weak_note_probs,
                                                              confidence_.mu_note)
                             : cbr_targets_from_weak(weak_note_probs, confidence_.mu_note);
        }

        // strong branch: differentiable
        Graph<float> g;
        auto run = model_.forward(g, strong_f);
        Var<float> f0_loss = cbr_loss(g, run.out.f0_refined, f0_targets);
        Var<float> total = f0_loss;
        Var<float> note_loss{};
        if (note) {
          note_loss = cbr_loss(g, run.out.note_logits, note_targets);
          total = g.add(f0_loss, note_loss);
        }
        g.backward(total);
        unlab[i].grads = collect_grads(g, run.bound);
        unlab[i].f0_loss = g.val(f0_loss)[0];
        unlab[i].note_loss = note ? g.val(note_loss)[0] : 0.0;
        unlab[i].weight = static_cast<double>(len);
        for (double p : f0_targets.weak_pos_mass) unlab[i].f0_pos_sum += p;
        if (note) {
          for (double p : note_targets.weak_pos_mass) unlab[i].note_pos_sum += p;
        }
      });

      double ul_weight = 0.0;
      for (const auto& r : unlab) ul_weight += r.weight;
      double f0_pos_total = 0.0, note_pos_total = 0.0;
      for (const auto& r : unlab) {
        const double w = r.weight / ul_weight;
        l_f0_cbr += r.f0_loss * w;
        l_note_cbr += r.note_loss * w;
        axpy(grads, r.grads, static_cast<float>(cfg_.omega * w));
        f0_pos_total += r.f0_pos_sum;
        note_pos_total += r.note_pos_sum;
      }

      // EMA update from this step's weak-branch local confidence
      const double p_f0 = f0_pos_total / ul_weight;
      confidence_.mu_f0 = update_confidence(confidence_.mu_f0, confidence_.momentum, p_f0);
      if (note) {
        const double p_note = note_pos_total / ul_weight;
        confidence_.mu_note =
            update_confidence(confidence_.mu_note, confidence_.momentum, p_note);
      }
      confidence_.step += 1;
      confidence_.validate();
    }

    const double l_total = total_loss(l_supervised, l_f0_cbr + l_note_cbr, cfg_.omega);
    adam_step(model_.params(), grads, adam_, adam_cfg_);

    step_ = s;
    TrainLogRow row;
    row.step = s;
    row.l_supervised = l_supervised;
    row.l_f0_cbr = l_f0_cbr;
    row.l_note_cbr = l_note_cbr;
    row.l_total = l_total;
    row.mu_f0 = confidence_.mu_f0;
    row.mu_note = confidence_.mu_note;
    return row;
  }

 private:
  std::vector<Tensor<float>> zero_grads() const {
    std::vector<Tensor<float>> out;
    out.reserve(model_.params().size());
    for (const auto& [name, t] : model_.params()) out.emplace_back(t.shape());
    return out;
  }

  static std::vector<Tensor<float>> collect_grads(const Graph<float>& g,
                                                  const BoundParams<float>& bp) {
    std::vector<Tensor<float>> out;
    out.reserve(bp.all().size());
    for (const auto& [name, var] : bp.all()) {
      out.push_back(g.has_grad(var) ? g.grad(var) : Tensor<float>(g.val(var).shape()));
    }
    return out;
  }

  static void axpy(std::vector<Tensor<float>>& acc, const std::vector<Tensor<float>>& x,
                   float a) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
      float* dst = acc[i].data();
      const float* src = x[i].data();
      const std::size_t n = acc[i].size();
      for (std::size_t j = 0; j < n; ++j) dst[j] += a * src[j];
    }
  }

  TrainConfig cfg_;
  Model<float> model_;
  AdamState<float> adam_;
  AdamConfig adam_cfg_;
  ConfidenceState confidence_;
  std::vector<LabeledClip> labeled_;
  std::vector<AudioClip> unlabeled_;
  std::vector<TrainLogRow> log_;
  std::size_t step_ = 0;
};

// --- inference ---

// Forward a feature through the model without gradients and decode the
// contour. Long clips run in overlapping chunks (50% overlap, center kept).
inline std::vector<ContourPoint> infer_contour_feature(const Model<float>& model,
                                                       const CfpFeature& feature,
                                                       std::size_t chunk_frames = 0) {
  const std::size_t max_frames = model.config().encoder.max_frames;
  const std::size_t W = chunk_frames > 0 ? std::min(chunk_frames, max_frames) : max_frames;
  const std::size_t T = feature.frames;

  auto logits_of = [&](const CfpFeature& f) {
    Graph<float> g(false);
    auto run = model.forward(g, f);
    return g.val(run.out.f0_refined);
  };

  if (T <= W) return decode_contour(logits_of(feature));

  Tensor<float> logits({T, kF0Classes});
  const std::size_t hop = W / 2;
  const std::size_t margin = W / 4;
  for (std::size_t start = 0;; start += hop) {
    if (start + W >= T) start = T - W;  // final chunk flush against the end
    CfpFeature chunk = crop_frames(feature, start, W);
    Tensor<float> part = logits_of(chunk);
    const std::size_t keep_lo = start == 0 ? 0 : margin;
    const std::size_t keep_hi = start + W >= T ? W : W - margin;
    for (std::size_t i = keep_lo; i < keep_hi; ++i) {
      std::copy(part.row(i), part.row(i) + kF0Classes, logits.row(start + i));
    }
    if (start + W >= T) break;
  }
  return decode_contour(logits);
}

inline std::vector<ContourPoint> infer_contour(const Model<float>& model,
                                               const std::string& audio_path) {
  return infer_contour_feature(model, compute_cfp(load_audio_resampled(audio_path)));
}

// --- evaluation over a manifest ---

struct ClipEval {
  std::string audio;
  EvalReport report;
};

struct EvalRun {
  std::vector<ClipEval> clips;
  EvalReport aggregate_report;
};

inline EvalRun evaluate_manifest(const Model<float>& model, const DatasetManifest& manifest,
                                 const std::string& split = "test") {
  EvalRun run;
  std::vector<ManifestEntry> entries =
      split.empty() ? manifest.entries : manifest.with_split(split);
  if (entries.empty()) {
    throw ValidationError(format_msg("manifest has no entries in split '", split, "'"));
  }
  for (const auto& e : entries) {
    if (!e.labeled()) {
      throw ValidationError(format_msg("evaluation requires labels: ", e.audio));
    }
  }
  run.clips.resize(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& e = entries[i];
    CfpFeature feature = compute_cfp(load_audio_resampled(e.audio));
    std::vector<double> times, f0s;
    read_f0_track(e.labels, times, f0s);
    FrameLabels labels = labels_from_track(times, f0s, feature.frames);
    auto contour = infer_contour_feature(model, feature);
    run.clips[i].audio = e.audio;
    run.clips[i].report = evaluate(contour_from_labels(labels), contour_frames(contour));
  });
  std::vector<EvalReport> reports;
  for (const auto& c : run.clips) reports.push_back(c.report);
  run.aggregate_report = aggregate(reports);
  return run;
}

// Convenience: evaluate a trainer's own training clips (overfit checks).
inline EvalReport evaluate_training_set(const Trainer& trainer) {
  std::vector<EvalReport> reports;
  for (const auto& clip : trainer.labeled_clips()) {
    auto contour = infer_contour_feature(trainer.model(), clip.feature);
    reports.push_back(evaluate(contour_from_labels(clip.labels), contour_frames(contour)));
  }
  return aggregate(reports);
}

// --- complexity benchmark ---

struct BenchReport {
  std::vector<std::size_t> lengths;
  std::vector<double> encoder_ms;
  std::vector<double> attention_ms;
  std::vector<double> encoder_ratios;
  std::vector<double> attention_ratios;
  long peak_rss_kb = -1;
};

inline long read_peak_rss_kb() {
  struct rusage usage;
  if (getrusage(RUSAGE_SELF, &usage) != 0) return -1;
  return usage.ru_maxrss;
}

inline BenchReport run_bench(const std::vector<std::size_t>& lengths, std::size_t reps,
                             const EncoderConfig& base_cfg = EncoderConfig{},
                             std::uint64_t seed = 99) {
  using clock = std::chrono::steady_clock;
  BenchReport report;
  report.lengths = lengths;
  const std::size_t max_len = *std::max_element(lengths.begin(), lengths.end());

  EncoderConfig cfg = base_cfg;
  cfg.max_frames = std::max(cfg.max_frames, max_len);
  ParamStore<float> ps;
  Rng rng(seed);
  init_encoder_params(ps, cfg, rng);
  AttentionRef attention(cfg.d_model, seed + 1);

  auto median_of = [&](std::function<void()> fn) {
    std::vector<double> times;
    fn();
    fn();  // two warm passes settle caches and the allocator
    for (std::size_t r = 0; r < reps; ++r) {
      const auto t0 = clock::now();
      fn();
      const auto t1 = clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };

  // weights are bound once; each rep streams one input through the tape and
  // rolls the graph back, as a serving loop would
  Graph<float> g(false);
  BoundParams<float> bp(g, ps);
  const std::size_t base = g.mark();
  for (std::size_t len : lengths) {
    Tensor<float> patches({len, cfg.patch_dim()});
    patches.fill_uniform(rng, 0.0, 1.0);
    report.encoder_ms.push_back(median_of([&]() {
      g.rollback(base);
      encode(g, bp, cfg, g.constant(patches));
    }));
  }
  for (std::size_t len : lengths) {
    Tensor<float> tokens({len, cfg.d_model});
    tokens.fill_uniform(rng, -1.0, 1.0);
    report.attention_ms.push_back(median_of([&]() { attention.forward(tokens); }));
  }
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    report.encoder_ratios.push_back(report.encoder_ms[i] / report.encoder_ms[i - 1]);
    report.attention_ratios.push_back(report.attention_ms[i] / report.attention_ms[i - 1]);
  }
  report.peak_rss_kb = read_peak_rss_kb();
  return report;
}

inline std::string bench_json(const BenchReport& r) {
  nlohmann::json j;
  j["lengths"] = r.lengths;
  j["encoder_ms"] = r.encoder_ms;
  j["attention_ms"] = r.attention_ms;
  j["encoder_doubling_ratios"] = r.encoder_ratios;
  j["attention_doubling_ratios"] = r.attention_ratios;
  j["peak_rss_kb"] = r.peak_rss_kb;
  return j.dump(2);
}

// --- synthetic dataset generation ---

struct GeneratedDataset {
  std::string labeled_manifest;
  std::string unlabeled_manifest;
  std::string test_manifest;
};

inline GeneratedDataset generate_dataset(const DatasetSynthSpec& spec,
                                         const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Rng rng(mix_seed(spec.seed, 0x73796e7468ull));

  auto make_clip = [&](const std::string& stem, bool labeled,
                       nlohmann::json& entries) {
    SynthSpec clip = spec.clip;
    const double r = rng.uniform();
    clip.kind = r < 0.4 ? TrajectoryKind::kConstant
                        : (r < 0.7 ? TrajectoryKind::kVibrato : TrajectoryKind::kGlide);
    // keep glides inside the pitch range
    clip.f0_hz = std::exp(rng.uniform(std::log(spec.f0_min), std::log(spec.f0_max / 1.3)));
    clip.glide_end_hz = clip.f0_hz * rng.uniform(1.05, 1.3);
    auto res = synth_clip(clip, rng);
    const std::string wav = stem + ".wav";
    write_wav((fs::path(out_dir) / wav).string(), res.clip);
    nlohmann::json e;
    e["audio"] = wav;
    if (labeled) {
      const std::string lab = stem + ".f0.txt";
      write_f0_track((fs::path(out_dir) / lab).string(), res.labels);
      e["labels"] = lab;
    }
    entries.push_back(e);
  };

  auto write_manifest = [&](const std::string& name, const nlohmann::json& entries) {
    nlohmann::json m;
    m["entries"] = entries;
    const std::string path = (fs::path(out_dir) / name).string();
    std::ofstream out(path);
    if (!out) throw IoError(format_msg("cannot write manifest: ", path));
    out << m.dump(2) << "\n";
    return path;
  };

  GeneratedDataset ds;
  char buf[64];
  {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < spec.labeled; ++i) {
      std::snprintf(buf, sizeof(buf), "labeled_%03zu", i);
      make_clip(buf, true, entries);
    }
    ds.labeled_manifest = write_manifest("train.json", entries);
  }
  {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < spec.unlabeled; ++i) {
      std::snprintf(buf, sizeof(buf), "unlabeled_%03zu", i);
      make_clip(buf, false, entries);
    }
    ds.unlabeled_manifest = write_manifest("pool.json", entries);
  }
  {
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t i = 0; i < spec.test; ++i) {
      std::snprintf(buf, sizeof(buf), "test_%03zu", i);
      make_clip(buf, true, entries);
      entries.back()["split"] = "test";
    }
    ds.test_manifest = write_manifest("test.json", entries);
  }
  return ds;
}

}  // namespace melex
