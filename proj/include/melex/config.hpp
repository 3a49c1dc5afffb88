#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "melex/cbr.hpp"
#include "melex/common.hpp"
#include "melex/model.hpp"
#include "melex/synth.hpp"

namespace melex {

// JSON helpers with explicit error paths ("config.encoder.d_model: ...").

namespace cfgdetail {

inline void expect_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ValidationError(format_msg(path, ": expected an object"));
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(format_msg(path, ".", key, ": wrong type"));
  }
}

inline void check_known_keys(const nlohmann::json& j, const std::string& path,
                             std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ValidationError(format_msg(path, ".", it.key(), ": unknown key"));
  }
}

inline std::optional<std::pair<double, double>> get_range(const nlohmann::json& j,
                                                          const std::string& key,
                                                          const std::string& path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ValidationError(format_msg(path, ".", key, ": expected [lo, hi]"));
  }
  const double lo = v[0].get<double>(), hi = v[1].get<double>();
  if (lo > hi) throw ValidationError(format_msg(path, ".", key, ": lo > hi"));
  return std::make_pair(lo, hi);
}

inline std::optional<double> get_opt_double(const nlohmann::json& j, const std::string& key,
                                            const std::string& path,
                                            std::optional<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number()) {
    throw ValidationError(format_msg(path, ".", key, ": expected a number or null"));
  }
  return j.at(key).get<double>();
}

}  // namespace cfgdetail

struct TrainConfig {
  std::uint64_t seed = 1234;
  std::size_t steps = 2000;
  double learning_rate = 4e-4;
  double omega = 0.1;
  std::size_t batch_labeled = 4;
  std::size_t batch_unlabeled = 4;
  std::size_t crop_frames = 512;
  std::size_t checkpoint_every = 500;
  bool no_note_decoder = false;
  bool no_cbr = false;
  EncoderConfig encoder;
  AugmentationSpec augmentation;
  double confidence_init = 0.95;
  double confidence_momentum = 0.999;
  bool cbr_global_k = false;
  std::string cache_dir;

  ModelConfig model_config() const {
    ModelConfig mc;
    mc.encoder = encoder;
    mc.note_decoder = !no_note_decoder;
    return mc;
  }

  void validate() const {
    encoder.validate();
    if (encoder.patch_width != 1) {
      throw ValidationError(
          "config.encoder.patch_width: the training/inference pipeline emits per-frame "
          "predictions and requires patch_width = 1");
    }
    if (steps == 0) throw ValidationError("config.steps: must be positive");
    if (batch_labeled == 0) throw ValidationError("config.batch_labeled: must be positive");
    if (learning_rate <= 0) throw ValidationError("config.learning_rate: must be positive");
    if (omega < 0) throw ValidationError("config.omega: must be nonnegative");
    if (crop_frames == 0) throw ValidationError("config.crop_frames: must be positive");
    if (crop_frames > encoder.max_frames) {
      throw ValidationError("config.crop_frames: exceeds encoder.max_frames");
    }
    if (!(confidence_init > 0.0 && confidence_init <= 1.0)) {
      throw ValidationError("config.confidence.mu_init: must lie in (0, 1]");
    }
    if (confidence_momentum < 0.0 || confidence_momentum > 1.0) {
      throw ValidationError("config.confidence.momentum: must lie in [0, 1]");
    }
  }

  static TrainConfig from_json(const nlohmann::json& j, const std::string& path = "config") {
    using namespace cfgdetail;
    expect_object(j, path);
    check_known_keys(j, path,
                     {"seed", "steps", "learning_rate", "omega", "batch_labeled",
                      "batch_unlabeled", "crop_frames", "checkpoint_every", "no_note_decoder",
                      "no_cbr", "encoder", "augmentation", "confidence", "cache_dir"});
    TrainConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", path, c.seed);
    c.steps = get_or<std::size_t>(j, "steps", path, c.steps);
    c.learning_rate = get_or<double>(j, "learning_rate", path, c.learning_rate);
    c.omega = get_or<double>(j, "omega", path, c.omega);
    c.batch_labeled = get_or<std::size_t>(j, "batch_labeled", path, c.batch_labeled);
    c.batch_unlabeled = get_or<std::size_t>(j, "batch_unlabeled", path, c.batch_unlabeled);
    c.crop_frames = get_or<std::size_t>(j, "crop_frames", path, c.crop_frames);
    c.checkpoint_every = get_or<std::size_t>(j, "checkpoint_every", path, c.checkpoint_every);
    c.no_note_decoder = get_or<bool>(j, "no_note_decoder", path, c.no_note_decoder);
    c.no_cbr = get_or<bool>(j, "no_cbr", path, c.no_cbr);
    c.cache_dir = get_or<std::string>(j, "cache_dir", path, c.cache_dir);
    if (j.contains("encoder")) {
      const auto& e = j.at("encoder");
      const std::string ep = path + ".encoder";
      expect_object(e, ep);
      check_known_keys(e, ep,
                       {"d_model", "d_state", "expand", "conv_width", "num_layers",
                        "patch_width", "max_frames", "dt_rank"});
      c.encoder.d_model = get_or<std::size_t>(e, "d_model", ep, c.encoder.d_model);
      c.encoder.d_state = get_or<std::size_t>(e, "d_state", ep, c.encoder.d_state);
      c.encoder.expand = get_or<std::size_t>(e, "expand", ep, c.encoder.expand);
      c.encoder.conv_width = get_or<std::size_t>(e, "conv_width", ep, c.encoder.conv_width);
      c.encoder.num_layers = get_or<std::size_t>(e, "num_layers", ep, c.encoder.num_layers);
      c.encoder.patch_width = get_or<std::size_t>(e, "patch_width", ep, c.encoder.patch_width);
      c.encoder.max_frames = get_or<std::size_t>(e, "max_frames", ep, c.encoder.max_frames);
      c.encoder.dt_rank = get_or<std::size_t>(e, "dt_rank", ep, c.encoder.dt_rank);
    }
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      const std::string ap = path + ".augmentation";
      expect_object(a, ap);
      check_known_keys(a, ap, {"weak", "strong"});
      if (a.contains("weak")) {
        const auto& w = a.at("weak");
        check_known_keys(w, ap + ".weak", {"snr_db"});
        c.augmentation.weak.snr_db = get_opt_double(w, "snr_db", ap + ".weak", 30.0);
      }
      if (a.contains("strong")) {
        const auto& s = a.at("strong");
        const std::string sp = ap + ".strong";
        check_known_keys(s, sp, {"gain_db", "reverb_rt60", "snr_db", "reverb_wet"});
        if (s.contains("gain_db")) c.augmentation.strong.gain_db = get_range(s, "gain_db", sp);
        if (s.contains("reverb_rt60")) {
          c.augmentation.strong.reverb_rt60 = get_range(s, "reverb_rt60", sp);
        }
        c.augmentation.strong.snr_db = get_opt_double(s, "snr_db", sp, 20.0);
        c.augmentation.strong.reverb_wet =
            get_or<double>(s, "reverb_wet", sp, c.augmentation.strong.reverb_wet);
      }
    }
    if (j.contains("confidence")) {
      const auto& cc = j.at("confidence");
      const std::string cp = path + ".confidence";
      expect_object(cc, cp);
      check_known_keys(cc, cp, {"mu_init", "momentum", "global_k"});
      c.confidence_init = get_or<double>(cc, "mu_init", cp, c.confidence_init);
      c.confidence_momentum = get_or<double>(cc, "momentum", cp, c.confidence_momentum);
      c.cbr_global_k = get_or<bool>(cc, "global_k", cp, c.cbr_global_k);
    }
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["steps"] = steps;
    j["learning_rate"] = learning_rate;
    j["omega"] = omega;
    j["batch_labeled"] = batch_labeled;
    j["batch_unlabeled"] = batch_unlabeled;
    j["crop_frames"] = crop_frames;
    j["checkpoint_every"] = checkpoint_every;
    j["no_note_decoder"] = no_note_decoder;
    j["no_cbr"] = no_cbr;
    j["encoder"] = {{"d_model", encoder.d_model},       {"d_state", encoder.d_state},
                    {"expand", encoder.expand},         {"conv_width", encoder.conv_width},
                    {"num_layers", encoder.num_layers}, {"patch_width", encoder.patch_width},
                    {"max_frames", encoder.max_frames}, {"dt_rank", encoder.dt_rank}};
    nlohmann::json aug;
    aug["weak"]["snr_db"] =
        augmentation.weak.snr_db ? nlohmann::json(*augmentation.weak.snr_db) : nullptr;
    aug["strong"]["gain_db"] =
        augmentation.strong.gain_db
            ? nlohmann::json({augmentation.strong.gain_db->first,
                              augmentation.strong.gain_db->second})
            : nullptr;
    aug["strong"]["reverb_rt60"] =
        augmentation.strong.reverb_rt60
            ? nlohmann::json({augmentation.strong.reverb_rt60->first,
                              augmentation.strong.reverb_rt60->second})
            : nullptr;
    aug["strong"]["snr_db"] =
        augmentation.strong.snr_db ? nlohmann::json(*augmentation.strong.snr_db) : nullptr;
    aug["strong"]["reverb_wet"] = augmentation.strong.reverb_wet;
    j["augmentation"] = aug;
    j["confidence"] = {{"mu_init", confidence_init},
                       {"momentum", confidence_momentum},
                       {"global_k", cbr_global_k}};
    j["cache_dir"] = cache_dir;
    return j;
  }

  static TrainConfig from_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw IoError(format_msg("cannot open config: ", file));
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(format_msg(file, ": invalid JSON: ", e.what()));
    }
    return from_json(j, "config");
  }
};

// --- dataset manifests ---

struct ManifestEntry {
  std::string audio;
  std::string labels;  // empty = unlabeled
  std::string split = "train";

  bool labeled() const { return !labels.empty(); }
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> with_split(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
      if (e.split == split) out.push_back(e);
    }
    return out;
  }

  static DatasetManifest from_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw IoError(format_msg("cannot open manifest: ", file));
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(format_msg(file, ": invalid JSON: ", e.what()));
    }
    cfgdetail::expect_object(j, file);
    if (!j.contains("entries") || !j.at("entries").is_array()) {
      throw ValidationError(format_msg(file, ".entries: expected an array"));
    }
    const auto base = std::filesystem::path(file).parent_path();
    DatasetManifest m;
    std::size_t i = 0;
    for (const auto& ej : j.at("entries")) {
      const std::string path = format_msg(file, ".entries[", i, "]");
      cfgdetail::expect_object(ej, path);
      cfgdetail::check_known_keys(ej, path, {"audio", "labels", "split"});
      ManifestEntry e;
      if (!ej.contains("audio")) throw ValidationError(format_msg(path, ".audio: required"));
      e.audio = ej.at("audio").get<std::string>();
      e.labels = cfgdetail::get_or<std::string>(ej, "labels", path, "");
      e.split = cfgdetail::get_or<std::string>(ej, "split", path, "train");
      // paths are manifest-relative
      auto resolve = [&](const std::string& p) {
        return std::filesystem::path(p).is_absolute() ? p : (base / p).string();
      };
      e.audio = resolve(e.audio);
      if (!e.labels.empty()) e.labels = resolve(e.labels);
      if (!std::filesystem::exists(e.audio)) {
        throw ValidationError(format_msg(path, ".audio: file does not exist: ", e.audio));
      }
      if (!e.labels.empty() && !std::filesystem::exists(e.labels)) {
        throw ValidationError(format_msg(path, ".labels: file does not exist: ", e.labels));
      }
      m.entries.push_back(std::move(e));
      ++i;
    }
    return m;
  }
};

// --- synthetic dataset description for the synth subcommand ---

struct DatasetSynthSpec {
  std::uint64_t seed = 7;
  std::size_t labeled = 8;
  std::size_t unlabeled = 16;
  std::size_t test = 4;
  SynthSpec clip;  // per-clip defaults; f0 and kind are sampled per clip
  double f0_min = 110.0;
  double f0_max = 660.0;

  static DatasetSynthSpec from_file(const std::string& file) {
    std::ifstream in(file);
    if (!in) throw IoError(format_msg("cannot open synth spec: ", file));
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(format_msg(file, ": invalid JSON: ", e.what()));
    }
    using namespace cfgdetail;
    expect_object(j, file);
    check_known_keys(j, file,
                     {"seed", "labeled", "unlabeled", "test", "seconds", "lead_silence",
                      "tail_silence", "harmonics", "harmonic_rolloff", "accompaniment_tones",
                      "accompaniment_level_db", "noise_floor_db", "f0_min", "f0_max",
                      "vibrato_depth_cents", "vibrato_rate_hz"});
    DatasetSynthSpec s;
    s.seed = get_or<std::uint64_t>(j, "seed", file, s.seed);
    s.labeled = get_or<std::size_t>(j, "labeled", file, s.labeled);
    s.unlabeled = get_or<std::size_t>(j, "unlabeled", file, s.unlabeled);
    s.test = get_or<std::size_t>(j, "test", file, s.test);
    s.clip.seconds = get_or<double>(j, "seconds", file, s.clip.seconds);
    s.clip.lead_silence = get_or<double>(j, "lead_silence", file, s.clip.lead_silence);
    s.clip.tail_silence = get_or<double>(j, "tail_silence", file, s.clip.tail_silence);
    s.clip.harmonics = get_or<int>(j, "harmonics", file, s.clip.harmonics);
    s.clip.harmonic_rolloff = get_or<double>(j, "harmonic_rolloff", file, s.clip.harmonic_rolloff);
    s.clip.accompaniment_tones =
        get_or<int>(j, "accompaniment_tones", file, s.clip.accompaniment_tones);
    s.clip.accompaniment_level_db =
        get_or<double>(j, "accompaniment_level_db", file, s.clip.accompaniment_level_db);
    s.clip.noise_floor_db = get_or<double>(j, "noise_floor_db", file, s.clip.noise_floor_db);
    s.clip.vibrato_depth_cents =
        get_or<double>(j, "vibrato_depth_cents", file, s.clip.vibrato_depth_cents);
    s.clip.vibrato_rate_hz = get_or<double>(j, "vibrato_rate_hz", file, s.clip.vibrato_rate_hz);
    s.f0_min = get_or<double>(j, "f0_min", file, s.f0_min);
    s.f0_max = get_or<double>(j, "f0_max", file, s.f0_max);
    if (s.labeled == 0) throw ValidationError(format_msg(file, ".labeled: must be positive"));
    if (s.f0_min < 62.0 || s.f0_max > 1000.0 || s.f0_min > s.f0_max) {
      throw ValidationError(format_msg(file, ": f0 range must lie in [62, 1000]"));
    }
    return s;
  }
};

}  // namespace melex
