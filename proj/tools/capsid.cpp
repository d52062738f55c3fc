#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "capsid/config.hpp"
#include "capsid/corpus.hpp"
#include "capsid/errors.hpp"
#include "capsid/evaluator.hpp"
#include "capsid/log.hpp"
#include "capsid/wav.hpp"

namespace {

using namespace capsid;

std::string joined(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

void require_fields(
    const RunConfig& cfg,
    const std::vector<std::pair<const char*, const std::string*>>& fields) {
  std::vector<std::string> problems = cfg.violations();
  for (const auto& [name, value] : fields)
    if (value->empty())
      problems.push_back(std::string(name) + " must be set");
  if (!problems.empty())
    throw ConfigError("invalid run config: " + joined(problems));
}

void validate_model_and_train(const RunConfig& cfg) {
  std::vector<std::string> problems;
  try {
    cfg.model.validate();
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  try {
    cfg.train.validate();
  } catch (const Error& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) throw ConfigError(joined(problems));
}

std::filesystem::path ensure_out(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_report_set(const std::filesystem::path& dir,
                      const EvalReport& report, const std::string& stem,
                      const std::string& confusion_stem) {
  save_eval_report_json((dir / (stem + ".json")).string(), report);
  write_text(dir / (stem + ".csv"), eval_report_csv(report));
  write_text(dir / (confusion_stem + ".csv"), confusion_csv(report));
  save_confusion_pgm((dir / (confusion_stem + ".pgm")).string(), report);
  for (const auto& w : report.warnings) logging::info(stem + ": " + w);
}

void write_emotion_table(const std::filesystem::path& dir,
                         const EvalReport& report, const std::string& stem) {
  if (report.per_emotion_accuracy.empty()) return;
  const EmotionTable table = per_emotion_report(report);
  write_text(dir / (stem + ".csv"), emotion_table_csv(table));
  for (const auto& w : table.warnings) logging::info(stem + ": " + w);
}

// The model's geometry pins what the feature extractor must produce.
void align_features_to_model(FeatureConfig& feature, const ModelConfig& model) {
  if (2 * feature.n_cepstra != model.input_rows)
    throw ConfigError("features yield " +
                      std::to_string(2 * feature.n_cepstra) +
                      " rows (2 x n_cepstra) but the model wants " +
                      std::to_string(model.input_rows));
  if (feature.target_frames != model.input_frames) {
    logging::debug("aligning feature.target_frames to the model's " +
                   std::to_string(model.input_frames) + " frames");
    feature.target_frames = model.input_frames;
  }
}

void cmd_synth(RunConfig& cfg) {
  require_fields(cfg, {{"run.out", &cfg.out_dir}});
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "synth");
  const SyntheticCorpus corpus = generate_synthetic_corpus(
      cfg.synth_speakers, cfg.synth_utterances, cfg.synth_reps, cfg.seed);
  for (std::size_t i = 0; i < corpus.clips.size(); ++i)
    save_wav((dir / corpus.manifest.entries[i].path).string(),
             corpus.clips[i]);
  save_manifest_csv((dir / "manifest.csv").string(), corpus.manifest);
  std::printf("synth: %zu clips for %zu speakers -> %s\n",
              corpus.clips.size(), cfg.synth_speakers, dir.string().c_str());
}

void cmd_extract(RunConfig& cfg) {
  require_fields(cfg, {{"run.manifest", &cfg.manifest_path},
                       {"run.out", &cfg.out_dir}});
  const CorpusManifest manifest = load_manifest_csv(cfg.manifest_path);
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "extract");

  std::vector<FeatureMatrix> kept;
  CorpusManifest kept_manifest;
  kept_manifest.kind = manifest.kind;
  std::size_t skipped = 0;
  for (const auto& entry : manifest.entries) {
    try {
      const AudioClip clip = load_wav(entry.path);
      kept.push_back(extract_features(clip, cfg.feature));
      kept_manifest.entries.push_back(entry);
    } catch (const Error& e) {
      if (!cfg.skip_errors) throw;
      logging::info("skipping '" + entry.path + "': " + e.what());
      ++skipped;
    }
  }
  if (kept.empty())
    throw DataError("no manifest entry could be extracted");
  const std::string archive = (dir / "features.capf").string();
  save_feature_archive(archive, kept, kept_manifest);
  std::printf("extract: %zu of %zu entries -> %s (%zu skipped)\n",
              kept.size(), manifest.entries.size(), archive.c_str(), skipped);
}

void cmd_train(RunConfig& cfg) {
  require_fields(cfg, {{"run.archive", &cfg.archive_path},
                       {"run.out", &cfg.out_dir}});
  const FeatureArchive archive = load_feature_archive(cfg.archive_path);
  infer_model_geometry(cfg.model, archive);
  validate_model_and_train(cfg);
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "train");

  const TrialsResult result = run_trials(archive, cfg.model, cfg.train,
                                         cfg.protocol, cfg.scheme,
                                         dir.string());
  for (const auto& trial : result.trials) {
    const auto trial_dir =
        dir / ("trial" + std::to_string(trial.plan.trial_index));
    save_history_csv((trial_dir / "history.csv").string(),
                     trial.train.history);
    save_split_plan((trial_dir / "split.json").string(), trial.plan);
    save_eval_report_json((trial_dir / "report.json").string(), trial.report);
  }
  write_report_set(dir, result.averaged, "report", "confusion");
  write_emotion_table(dir, result.averaged, "emotions");
  std::printf(
      "train: %zu trials, averaged accuracy %.4f%%, auc %.6f -> %s\n",
      result.trials.size(), result.averaged.overall_accuracy,
      result.averaged.auc_macro, dir.string().c_str());
}

void run_noise_pass(RunConfig& cfg, LoadedModel& loaded,
                    const CorpusManifest& manifest,
                    const std::vector<std::size_t>& test_items,
                    const std::filesystem::path& dir) {
  const NoiseReport nr = noise_eval(
      loaded.model, loaded.standardizer, manifest, test_items, cfg.feature,
      cfg.noise_ratio, cfg.seed, cfg.train.batch_size);
  write_text(dir / "noise.csv", noise_table_csv(nr));
  write_report_set(dir, nr.clean, "clean_report", "clean_confusion");
  write_report_set(dir, nr.distorted, "distorted_report",
                   "distorted_confusion");
  for (const auto& w : nr.warnings) logging::info("noise: " + w);
  std::printf(
      "noise: ratio %.3f, clean accuracy %.4f%%, distorted accuracy %.4f%% "
      "-> %s\n",
      nr.ratio, nr.clean.overall_accuracy, nr.distorted.overall_accuracy,
      dir.string().c_str());
}

void cmd_eval(RunConfig& cfg) {
  require_fields(cfg, {{"run.archive", &cfg.archive_path},
                       {"run.model", &cfg.model_path},
                       {"run.out", &cfg.out_dir}});
  const FeatureArchive archive = load_feature_archive(cfg.archive_path);
  LoadedModel loaded = load_model(cfg.model_path);
  cfg.model = loaded.config;
  if (cfg.noise_ratio > 0.0) align_features_to_model(cfg.feature, cfg.model);
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "eval");

  const SplitPlan plan =
      make_split_plan(archive.manifest, cfg.protocol, cfg.seed);
  const EvalReport report =
      evaluate(loaded.model, loaded.standardizer, archive, plan.test_items,
               cfg.train.batch_size);
  write_report_set(dir, report, "report", "confusion");
  write_emotion_table(dir, report, "emotions");
  std::printf("eval: %zu test items, accuracy %.4f%%, auc %.6f -> %s\n",
              report.n_test_items, report.overall_accuracy, report.auc_macro,
              dir.string().c_str());
  if (cfg.noise_ratio > 0.0)
    run_noise_pass(cfg, loaded, archive.manifest, plan.test_items, dir);
}

void cmd_noise(RunConfig& cfg) {
  if (cfg.noise_ratio == 0.0) cfg.noise_ratio = 2.0;
  require_fields(cfg, {{"run.manifest", &cfg.manifest_path},
                       {"run.model", &cfg.model_path},
                       {"run.out", &cfg.out_dir}});
  const CorpusManifest manifest = load_manifest_csv(cfg.manifest_path);
  LoadedModel loaded = load_model(cfg.model_path);
  cfg.model = loaded.config;
  align_features_to_model(cfg.feature, cfg.model);
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "noise");

  const SplitPlan plan = make_split_plan(manifest, cfg.protocol, cfg.seed);
  run_noise_pass(cfg, loaded, manifest, plan.test_items, dir);
}

void cmd_ablate(RunConfig& cfg) {
  require_fields(cfg, {{"run.archive", &cfg.archive_path},
                       {"run.out", &cfg.out_dir}});
  const FeatureArchive archive = load_feature_archive(cfg.archive_path);
  infer_model_geometry(cfg.model, archive);
  validate_model_and_train(cfg);
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "ablate");

  const AblationGrid grid =
      ablation_grid(archive, cfg.model, cfg.train, cfg.protocol);
  write_text(dir / "ablation.csv", ablation_csv(grid));
  std::printf("ablate: %zu cells on a shared split -> %s\n",
              grid.cells.size(), (dir / "ablation.csv").string().c_str());
}

void cmd_report(RunConfig& cfg) {
  require_fields(cfg, {{"run.report", &cfg.report_path},
                       {"run.out", &cfg.out_dir}});
  const EvalReport report = load_eval_report_json(cfg.report_path);
  const auto dir = ensure_out(cfg);
  save_run_json((dir / "run.json").string(), cfg, "report");
  write_report_set(dir, report, "report", "confusion");
  write_emotion_table(dir, report, "emotions");
  std::printf("report: rendered %zu-speaker report -> %s\n",
              report.speakers.size(), dir.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speaker identification from emotional speech"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string manifest_path;
  std::string archive_path;
  std::string model_path;
  std::string report_path;
  std::string protocol;
  std::string scheme;
  std::string architecture;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool skip_errors = false;
  double noise_ratio = 0.0;
  std::size_t speakers = 0;
  std::size_t utterances = 0;
  std::size_t reps = 0;
  std::size_t trials = 0;
  std::size_t epochs = 0;
  std::size_t frames = 0;

  auto* config_opt =
      app.add_option("--config", config_path,
                     "config file: flat key = value lines or a run.json");
  auto* seed_opt = app.add_option("--seed", seed, "global seed");
  auto* out_opt = app.add_option("--out", out_dir, "output directory");
  auto* workers_opt = app.add_option(
      "--workers", workers, "worker count; never changes numeric results");
  auto* skip_opt = app.add_flag("--skip-errors", skip_errors,
                                "skip unreadable inputs instead of aborting");
  auto* manifest_opt =
      app.add_option("--manifest", manifest_path, "corpus manifest csv");
  auto* archive_opt =
      app.add_option("--archive", archive_path, "feature archive (.capf)");
  auto* model_opt =
      app.add_option("--model", model_path, "model checkpoint (.capw)");
  auto* report_opt =
      app.add_option("--report", report_path, "report json to re-render");
  auto* protocol_opt = app.add_option(
      "--protocol", protocol, "split protocol: esd_style, ravdess_style, susas_style");
  auto* scheme_opt =
      app.add_option("--scheme", scheme, "trial scheme: rotation or folds");
  auto* arch_opt = app.add_option(
      "--arch", architecture,
      "model architecture: capsnet_m, caps9, caps15, caps19, baseline_cnn");
  auto* ratio_opt = app.add_option("--noise-ratio", noise_ratio,
                                   "signal-to-noise amplitude ratio");
  auto* speakers_opt =
      app.add_option("--speakers", speakers, "synthetic corpus speakers");
  auto* utterances_opt =
      app.add_option("--utterances", utterances, "synthetic corpus utterances");
  auto* reps_opt =
      app.add_option("--reps", reps, "synthetic corpus repetitions");
  auto* trials_opt = app.add_option("--trials", trials, "training trials");
  auto* epochs_opt =
      app.add_option("--epochs", epochs, "maximum training epochs");
  auto* frames_opt =
      app.add_option("--frames", frames, "feature frames per clip");

  for (const auto& name :
       {"synth", "extract", "train", "eval", "ablate", "noise", "report"}) {
    static const std::map<std::string, std::string> kAbout = {
        {"synth", "generate the deterministic synthetic corpus"},
        {"extract", "extract feature maps for every manifest entry"},
        {"train", "run the trial protocol and save checkpoints"},
        {"eval", "evaluate a checkpoint on a split's test items"},
        {"ablate", "sweep routing iterations with the decoder on and off"},
        {"noise", "compare clean against noise-distorted test audio"},
        {"report", "re-render tables and images from a report json"}};
    app.add_subcommand(name, kAbout.at(name))->fallthrough();
  }

  try {
    app.parse(argc, argv);

    RunConfig cfg;
    if (config_opt->count())
      apply_config(cfg, load_config_file(config_path));
    if (seed_opt->count()) cfg.seed = seed;
    if (out_opt->count()) cfg.out_dir = out_dir;
    if (workers_opt->count()) cfg.workers = workers;
    if (skip_opt->count()) cfg.skip_errors = skip_errors;
    if (manifest_opt->count()) cfg.manifest_path = manifest_path;
    if (archive_opt->count()) cfg.archive_path = archive_path;
    if (model_opt->count()) cfg.model_path = model_path;
    if (report_opt->count()) cfg.report_path = report_path;
    if (protocol_opt->count())
      cfg.protocol = split_protocol_from_name(protocol);
    if (scheme_opt->count()) cfg.scheme = trial_scheme_from_name(scheme);
    if (arch_opt->count())
      cfg.model.architecture = architecture_from_name(architecture);
    if (ratio_opt->count()) cfg.noise_ratio = noise_ratio;
    if (speakers_opt->count()) cfg.synth_speakers = speakers;
    if (utterances_opt->count()) cfg.synth_utterances = utterances;
    if (reps_opt->count()) cfg.synth_reps = reps;
    if (trials_opt->count()) cfg.train.trials = trials;
    if (epochs_opt->count()) cfg.train.max_epochs = epochs;
    if (frames_opt->count()) cfg.feature.target_frames = frames;
    cfg.train.seed = cfg.seed;

    const std::string command = app.get_subcommands().front()->get_name();
    if (command == "synth") {
      cmd_synth(cfg);
    } else if (command == "extract") {
      cmd_extract(cfg);
    } else if (command == "train") {
      cmd_train(cfg);
    } else if (command == "eval") {
      cmd_eval(cfg);
    } else if (command == "ablate") {
      cmd_ablate(cfg);
    } else if (command == "noise") {
      cmd_noise(cfg);
    } else {
      cmd_report(cfg);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s: %s\n", e.code().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal-error: %s\n", e.what());
    return 1;
  }
}
