// melex: singing-melody extraction pipeline driver.
//
// Subcommands: train, infer, eval, bench, synth.
// Exit codes: 0 success, 2 config/validation error, 3 numeric failure,
// 4 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "melex/trainer.hpp"

namespace fs = std::filesystem;
using namespace melex;

namespace {

Model<float> model_from_checkpoint(const LoadedCheckpoint& ck) {
  TrainConfig cfg = TrainConfig::from_json(ck.meta.config, "checkpoint.config");
  Model<float> model(cfg.model_config(), 0);
  for (auto& [name, tensor] : model.params()) {
    if (!ck.params.has(name)) {
      throw IoError(format_msg("checkpoint is missing parameter ", name));
    }
    const Tensor<float>& loaded = ck.params.at(name);
    if (!(loaded.shape() == tensor.shape())) {
      throw IoError(format_msg("checkpoint parameter ", name, " has shape ",
                               loaded.shape_str(), ", expected ", tensor.shape_str()));
    }
    tensor = loaded;
  }
  return model;
}

int run_train(const std::string& config_path, const std::string& labeled_path,
              const std::string& unlabeled_path, const std::string& out_dir,
              bool no_note_decoder, bool no_cbr, double omega_override) {
  TrainConfig cfg = config_path.empty() ? TrainConfig{} : TrainConfig::from_file(config_path);
  if (no_note_decoder) cfg.no_note_decoder = true;
  if (no_cbr) cfg.no_cbr = true;
  if (omega_override >= 0.0) cfg.omega = omega_override;
  cfg.validate();

  DatasetManifest labeled = DatasetManifest::from_file(labeled_path);
  DatasetManifest unlabeled;
  const bool has_pool = !unlabeled_path.empty();
  if (has_pool) unlabeled = DatasetManifest::from_file(unlabeled_path);

  fs::create_directories(out_dir);
  Trainer trainer(cfg, labeled, has_pool ? &unlabeled : nullptr);
  std::printf("training: %zu labeled clip(s), cbr %s, %zu steps\n",
              trainer.labeled_clips().size(), trainer.semi_supervised() ? "on" : "off",
              cfg.steps);

  const std::string log_path = (fs::path(out_dir) / "loss_log.csv").string();
  try {
    trainer.run(cfg.steps, out_dir);
  } catch (...) {
    write_loss_log(log_path, trainer.log());  // keep the partial log on abort
    throw;
  }
  trainer.save((fs::path(out_dir) / "ckpt_final.bin").string());
  write_loss_log(log_path, trainer.log());
  const auto& last = trainer.log().back();
  std::printf("done: step %zu  L_l %.4f  L_total %.4f  mu_f0 %.4f  mu_note %.4f\n",
              last.step, last.l_supervised, last.l_total, last.mu_f0, last.mu_note);
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& audio, const std::string& out) {
  Model<float> model = model_from_checkpoint(load_checkpoint(ckpt));
  auto contour = infer_contour(model, audio);
  write_contour_csv(out, contour);
  std::printf("wrote %zu frames to %s\n", contour.size(), out.c_str());
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& manifest_path, const std::string& out,
             const std::string& per_clip_csv) {
  Model<float> model = model_from_checkpoint(load_checkpoint(ckpt));
  DatasetManifest manifest = DatasetManifest::from_file(manifest_path);
  const std::string split = manifest.with_split("test").empty() ? "" : "test";
  EvalRun run = evaluate_manifest(model, manifest, split);

  std::ofstream report(out);
  if (!report) throw IoError(format_msg("cannot write report: ", out));
  report << report_json(run.aggregate_report) << "\n";
  if (!per_clip_csv.empty()) {
    std::ofstream csv(per_clip_csv);
    if (!csv) throw IoError(format_msg("cannot write per-clip table: ", per_clip_csv));
    csv << "audio,vr,vfa,rpa,rca,oa,frames\n";
    auto fmt = [](std::optional<double> v) {
      char buf[32];
      if (!v) return std::string("");
      std::snprintf(buf, sizeof(buf), "%.2f", *v);
      return std::string(buf);
    };
    for (const auto& c : run.clips) {
      csv << c.audio << "," << fmt(c.report.vr()) << "," << fmt(c.report.vfa()) << ","
          << fmt(c.report.rpa()) << "," << fmt(c.report.rca()) << ","
          << fmt(c.report.oa()) << "," << c.report.total() << "\n";
    }
  }
  std::printf("%s\n", report_json(run.aggregate_report).c_str());
  return 0;
}

int run_bench_cmd(const std::string& out, std::vector<std::size_t> lengths, std::size_t reps) {
  if (lengths.empty()) lengths = {256, 512, 1024, 2048};
  BenchReport report = run_bench(lengths, reps);
  std::ofstream f(out);
  if (!f) throw IoError(format_msg("cannot write bench report: ", out));
  f << bench_json(report) << "\n";
  std::printf("%s\n", bench_json(report).c_str());
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  DatasetSynthSpec spec =
      spec_path.empty() ? DatasetSynthSpec{} : DatasetSynthSpec::from_file(spec_path);
  GeneratedDataset ds = generate_dataset(spec, out_dir);
  std::printf("wrote %s\n      %s\n      %s\n", ds.labeled_manifest.c_str(),
              ds.unlabeled_manifest.c_str(), ds.test_manifest.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"singing melody extraction: CFP front end, bidirectional SSM encoder, "
               "note-guided f0 decoder, semi-supervised training"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model from manifests");
  std::string config_path, labeled_path, unlabeled_path, out_dir = "ckpt";
  bool no_note_decoder = false, no_cbr = false;
  double omega_override = -1.0;
  train->add_option("--config", config_path, "training config JSON");
  train->add_option("--labeled", labeled_path, "labeled manifest JSON")->required();
  train->add_option("--unlabeled", unlabeled_path, "unlabeled-pool manifest JSON");
  train->add_option("--out", out_dir, "output directory for checkpoints and logs");
  train->add_flag("--no-note-decoder", no_note_decoder,
                  "ablation: raw f0 head only, no note guidance");
  train->add_flag("--no-cbr", no_cbr, "ablation: supervised training only");
  train->add_option("--omega", omega_override, "unsupervised loss weight override");

  // infer
  auto* infer = app.add_subcommand("infer", "extract a melody contour from audio");
  std::string ckpt, audio, contour_out;
  infer->add_option("--ckpt", ckpt, "checkpoint file")->required();
  infer->add_option("--audio", audio, "input WAV (16-bit PCM or float32)")->required();
  infer->add_option("--out", contour_out, "output contour CSV")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against labeled clips");
  std::string eval_ckpt, eval_manifest, eval_out = "report.json", per_clip;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--manifest", eval_manifest, "manifest with labeled entries")->required();
  eval->add_option("--out", eval_out, "aggregate report JSON");
  eval->add_option("--per-clip", per_clip, "optional per-clip CSV table");

  // bench
  auto* bench = app.add_subcommand("bench", "wall-time scaling benchmark");
  std::string bench_out = "bench.json";
  std::vector<std::size_t> lengths;
  std::size_t reps = 5;
  bench->add_option("--out", bench_out, "report JSON path");
  bench->add_option("--lengths", lengths, "sequence lengths to time");
  bench->add_option("--reps", reps, "repetitions per length (median taken)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_spec, synth_out = "data";
  synth->add_option("--spec", synth_spec, "dataset spec JSON");
  synth->add_option("--out", synth_out, "output directory");

  try {
    app.parse(argc, argv);
    if (train->parsed()) {
      return run_train(config_path, labeled_path, unlabeled_path, out_dir, no_note_decoder,
                       no_cbr, omega_override);
    }
    if (infer->parsed()) return run_infer(ckpt, audio, contour_out);
    if (eval->parsed()) return run_eval(eval_ckpt, eval_manifest, eval_out, per_clip);
    if (bench->parsed()) return run_bench_cmd(bench_out, lengths, reps);
    if (synth->parsed()) return run_synth(synth_spec, synth_out);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
