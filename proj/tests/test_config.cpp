#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "capsid/config.hpp"
#include "capsid/corpus.hpp"
#include "capsid/dsp.hpp"
#include "capsid/errors.hpp"
#include "capsid/feature_archive.hpp"

using namespace capsid;

namespace {

std::filesystem::path temp_dir() {
  std::string tmpl =
      (std::filesystem::temp_directory_path() / "capsid-config-XXXXXX")
          .string();
  char* made = mkdtemp(tmpl.data());
  REQUIRE(made != nullptr);
  return std::filesystem::path(made);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << text;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("flat text parsing trims, skips comments, and reports bad lines") {
  const auto kv = parse_config_text(
      "# leading comment\n"
      "\n"
      "  train.trials = 5   # trailing comment\n"
      "run.out=artifacts\n"
      "   run.protocol   =   esd_style\n");
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("train.trials") == "5");
  CHECK(kv.at("run.out") == "artifacts");
  CHECK(kv.at("run.protocol") == "esd_style");

  const std::string msg = message_of([] {
    parse_config_text(
        "just words\n"
        "= headless\n"
        "run.seed = 1\n"
        "run.seed = 2\n");
  });
  CHECK(msg.find("line 1 has no '='") != std::string::npos);
  CHECK(msg.find("line 2 has an empty key") != std::string::npos);
  CHECK(msg.find("duplicate key 'run.seed' at line 4") != std::string::npos);
  CHECK_THROWS_AS(parse_config_text("oops\n"), ParseError);
}

TEST_CASE("every config key lands on its field") {
  RunConfig cfg;
  apply_config(cfg, {{"feature.frame_ms", "20"},
                     {"feature.hop_ms", "12.5"},
                     {"feature.n_fft", "512"},
                     {"feature.n_mel_filters", "30"},
                     {"feature.n_cepstra", "13"},
                     {"feature.fmin_hz", "50"},
                     {"feature.fmax_hz", "7000"},
                     {"feature.target_frames", "125"},
                     {"feature.pre_emphasis", "0.95"},
                     {"feature.delta_window", "3"},
                     {"model.architecture", "caps15"},
                     {"model.n_classes", "10"},
                     {"model.input_rows", "26"},
                     {"model.input_frames", "125"},
                     {"model.routing_iterations", "4"},
                     {"model.decoder_enabled", "off"},
                     {"model.decoder_hidden", "256"},
                     {"model.dropout_rate", "0.25"},
                     {"model.conv1_kernel_height", "5"},
                     {"loss.m_plus", "0.8"},
                     {"loss.m_minus", "0.2"},
                     {"loss.lambda", "0.4"},
                     {"loss.alpha", "0.001"},
                     {"train.batch_size", "32"},
                     {"train.learning_rate", "0.01"},
                     {"train.max_epochs", "17"},
                     {"train.patience", "4"},
                     {"train.trials", "3"},
                     {"run.protocol", "susas_style"},
                     {"run.scheme", "folds"},
                     {"run.seed", "123456789"},
                     {"run.workers", "2"},
                     {"run.skip_errors", "true"},
                     {"run.noise_ratio", "2.5"},
                     {"run.manifest", "m.csv"},
                     {"run.archive", "a.capf"},
                     {"run.model", "w.capw"},
                     {"run.report", "r.json"},
                     {"run.out", "outdir"},
                     {"run.speakers", "4"},
                     {"run.utterances", "6"},
                     {"run.reps", "7"}});
  CHECK(cfg.feature.frame_ms == 20.0);
  CHECK(cfg.feature.hop_ms == 12.5);
  CHECK(cfg.feature.n_fft == 512);
  CHECK(cfg.feature.n_mel_filters == 30);
  CHECK(cfg.feature.n_cepstra == 13);
  CHECK(cfg.feature.fmin_hz == 50.0);
  CHECK(cfg.feature.fmax_hz == 7000.0);
  CHECK(cfg.feature.target_frames == 125);
  CHECK(cfg.feature.pre_emphasis == 0.95);
  CHECK(cfg.feature.delta_window == 3);
  CHECK(cfg.model.architecture == Architecture::kCaps15);
  CHECK(cfg.model.n_classes == 10);
  CHECK(cfg.model.input_rows == 26);
  CHECK(cfg.model.input_frames == 125);
  CHECK(cfg.model.routing_iterations == 4);
  CHECK(cfg.model.decoder_enabled == false);
  CHECK(cfg.model.decoder_hidden == 256);
  CHECK(cfg.model.dropout_rate == 0.25);
  CHECK(cfg.model.conv1_kernel_height == 5);
  CHECK(cfg.model.loss.m_plus == 0.8);
  CHECK(cfg.model.loss.m_minus == 0.2);
  CHECK(cfg.model.loss.lambda == 0.4);
  CHECK(cfg.model.loss.alpha == 0.001);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.train.max_epochs == 17);
  CHECK(cfg.train.patience == 4);
  CHECK(cfg.train.trials == 3);
  CHECK(cfg.protocol == SplitProtocol::kSusasStyle);
  CHECK(cfg.scheme == TrialScheme::kRepetitionFolds);
  CHECK(cfg.seed == 123456789);
  CHECK(cfg.workers == 2);
  CHECK(cfg.skip_errors == true);
  CHECK(cfg.noise_ratio == 2.5);
  CHECK(cfg.manifest_path == "m.csv");
  CHECK(cfg.archive_path == "a.capf");
  CHECK(cfg.model_path == "w.capw");
  CHECK(cfg.report_path == "r.json");
  CHECK(cfg.out_dir == "outdir");
  CHECK(cfg.synth_speakers == 4);
  CHECK(cfg.synth_utterances == 6);
  CHECK(cfg.synth_reps == 7);
}

TEST_CASE("unknown keys and unparsable values are reported together") {
  RunConfig cfg;
  const std::string msg = message_of([&] {
    apply_config(cfg, {{"bogus.key", "3"},
                       {"train.batch_size", "many"},
                       {"train.learning_rate", "fast"},
                       {"run.seed", "-4"},
                       {"model.architecture", "transformer"},
                       {"run.skip_errors", "maybe"}});
  });
  CHECK(msg.find("unknown config key 'bogus.key'") != std::string::npos);
  CHECK(msg.find("cannot parse 'many' for 'train.batch_size'") !=
        std::string::npos);
  CHECK(msg.find("cannot parse 'fast' for 'train.learning_rate'") !=
        std::string::npos);
  CHECK(msg.find("cannot parse '-4' for 'run.seed'") != std::string::npos);
  CHECK(msg.find("'model.architecture'") != std::string::npos);
  CHECK(msg.find("cannot parse 'maybe' for 'run.skip_errors'") !=
        std::string::npos);
  CHECK_THROWS_AS(apply_config(cfg, {{"bogus.key", "3"}}), ConfigError);

  RunConfig booleans;
  for (const char* word : {"true", "1", "on"}) {
    booleans.skip_errors = false;
    apply_config(booleans, {{"run.skip_errors", word}});
    CHECK(booleans.skip_errors == true);
  }
  for (const char* word : {"false", "0", "off"}) {
    booleans.skip_errors = true;
    apply_config(booleans, {{"run.skip_errors", word}});
    CHECK(booleans.skip_errors == false);
  }
}

TEST_CASE("config files load from flat text or a previous run json") {
  const auto dir = temp_dir();
  write_file(dir / "run.conf",
             "run.seed = 7\n"
             "model.architecture = caps9\n");
  const auto text_kv = load_config_file((dir / "run.conf").string());
  CHECK(text_kv.at("run.seed") == "7");
  CHECK(text_kv.at("model.architecture") == "caps9");

  RunConfig cfg;
  cfg.seed = 7;
  cfg.model.architecture = Architecture::kCaps9;
  write_file(dir / "run.json", run_config_json(cfg, "train"));
  const auto json_kv = load_config_file((dir / "run.json").string());
  CHECK(json_kv.count("command") == 0);
  CHECK(json_kv.at("run.seed") == "7");
  CHECK(json_kv.at("model.architecture") == "caps9");

  CHECK_THROWS_AS(load_config_file((dir / "absent.conf").string()), IoError);
  write_file(dir / "broken.json", "{ not json ]");
  CHECK_THROWS_AS(load_config_file((dir / "broken.json").string()),
                  ParseError);
  write_file(dir / "array.json", "[1, 2]");
  CHECK_THROWS_AS(load_config_file((dir / "array.json").string()),
                  ParseError);
  const std::string msg = message_of(
      [&] { load_config_file((dir / "broken.json").string()); });
  CHECK(msg.find("broken.json") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("the resolved run json round-trips every field exactly") {
  RunConfig original;
  original.feature.frame_ms = 23.7;
  original.feature.hop_ms = 11.3;
  original.feature.n_fft = 1024;
  original.feature.fmin_hz = 1.0 / 3.0;
  original.feature.fmax_hz = 7919.0 / 7.0;
  original.feature.pre_emphasis = 0.123456789012345;
  original.feature.target_frames = 125;
  original.model.architecture = Architecture::kBaselineCnn;
  original.model.n_classes = 11;
  original.model.input_rows = 40;
  original.model.input_frames = 125;
  original.model.dropout_rate = 0.31415926535897931;
  original.model.loss.alpha = 5e-4;
  original.train.learning_rate = 2.0 / 3.0;
  original.train.seed = 99;
  original.protocol = SplitProtocol::kRavdessStyle;
  original.scheme = TrialScheme::kRepetitionFolds;
  original.seed = 99;
  original.workers = 3;
  original.skip_errors = true;
  original.noise_ratio = 0.1 + 0.2;
  original.manifest_path = "data/manifest.csv";
  original.out_dir = "artifacts/run7";
  original.synth_speakers = 12;

  const auto dir = temp_dir();
  write_file(dir / "run.json", run_config_json(original, "eval"));
  RunConfig loaded;
  apply_config(loaded, load_config_file((dir / "run.json").string()));
  loaded.train.seed = loaded.seed;

  CHECK(loaded.feature.frame_ms == original.feature.frame_ms);
  CHECK(loaded.feature.hop_ms == original.feature.hop_ms);
  CHECK(loaded.feature.n_fft == original.feature.n_fft);
  CHECK(loaded.feature.fmin_hz == original.feature.fmin_hz);
  CHECK(loaded.feature.fmax_hz == original.feature.fmax_hz);
  CHECK(loaded.feature.pre_emphasis == original.feature.pre_emphasis);
  CHECK(loaded.feature.target_frames == original.feature.target_frames);
  CHECK(loaded.model.architecture == original.model.architecture);
  CHECK(loaded.model.n_classes == original.model.n_classes);
  CHECK(loaded.model.input_rows == original.model.input_rows);
  CHECK(loaded.model.input_frames == original.model.input_frames);
  CHECK(loaded.model.dropout_rate == original.model.dropout_rate);
  CHECK(loaded.model.loss.alpha == original.model.loss.alpha);
  CHECK(loaded.train.learning_rate == original.train.learning_rate);
  CHECK(loaded.train.seed == original.train.seed);
  CHECK(loaded.protocol == original.protocol);
  CHECK(loaded.scheme == original.scheme);
  CHECK(loaded.seed == original.seed);
  CHECK(loaded.workers == original.workers);
  CHECK(loaded.skip_errors == original.skip_errors);
  CHECK(loaded.noise_ratio == original.noise_ratio);
  CHECK(loaded.manifest_path == original.manifest_path);
  CHECK(loaded.out_dir == original.out_dir);
  CHECK(loaded.synth_speakers == original.synth_speakers);

  const std::string once = run_config_json(original, "eval");
  CHECK(run_config_json(loaded, "eval") == once);
  CHECK(once.back() == '\n');
  std::filesystem::remove_all(dir);
}

TEST_CASE("geometry inference fills only the zeroed fields") {
  const SyntheticCorpus corpus = generate_synthetic_corpus(2, 2, 1, 5);
  FeatureConfig fc;
  fc.target_frames = 17;
  std::vector<FeatureMatrix> features;
  for (const auto& clip : corpus.clips)
    features.push_back(extract_features(clip, fc));
  FeatureArchive archive{features, corpus.manifest};

  RunConfig cfg;
  CHECK(cfg.model.n_classes == 0);
  CHECK(cfg.model.input_rows == 0);
  CHECK(cfg.model.input_frames == 0);
  infer_model_geometry(cfg.model, archive);
  CHECK(cfg.model.n_classes == 2);
  CHECK(cfg.model.input_rows == 40);
  CHECK(cfg.model.input_frames == 17);

  ModelConfig pinned;
  pinned.n_classes = 9;
  pinned.input_rows = 26;
  pinned.input_frames = 300;
  infer_model_geometry(pinned, archive);
  CHECK(pinned.n_classes == 9);
  CHECK(pinned.input_rows == 26);
  CHECK(pinned.input_frames == 300);

  FeatureArchive empty;
  CHECK_THROWS_AS(infer_model_geometry(pinned, empty), DataError);
}

TEST_CASE("run config validation names every violated field") {
  RunConfig cfg;
  CHECK(cfg.violations().empty());
  CHECK_NOTHROW(cfg.validate());

  cfg.workers = 0;
  cfg.noise_ratio = -1.0;
  cfg.synth_speakers = 1;
  cfg.synth_utterances = 0;
  cfg.synth_reps = 0;
  cfg.manifest_path = "/definitely/not/here.csv";
  cfg.archive_path = "/definitely/not/here.capf";
  const auto problems = cfg.violations();
  CHECK(problems.size() == 7);
  const std::string msg = message_of([&] { cfg.validate(); });
  CHECK(msg.find("run.workers must be at least 1") != std::string::npos);
  CHECK(msg.find("run.noise_ratio must not be negative") !=
        std::string::npos);
  CHECK(msg.find("run.speakers must be at least 2") != std::string::npos);
  CHECK(msg.find("run.utterances must be at least 2") != std::string::npos);
  CHECK(msg.find("run.reps must be at least 1") != std::string::npos);
  CHECK(msg.find("run.manifest points to a missing path") !=
        std::string::npos);
  CHECK(msg.find("run.archive points to a missing path") !=
        std::string::npos);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  RunConfig with_real_path;
  const auto dir = temp_dir();
  write_file(dir / "manifest.csv", "path,speaker,emotion,utterance,rep\n");
  with_real_path.manifest_path = (dir / "manifest.csv").string();
  CHECK(with_real_path.violations().empty());
  std::filesystem::remove_all(dir);
}
