#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capsid/dsp.hpp"
#include "capsid/evaluator.hpp"
#include "capsid/models.hpp"
#include "capsid/trainer.hpp"

namespace capsid {

// The merged, flat view of one run: feature, model, and training settings
// plus protocol, paths, and the single global seed every sub-seed derives
// from. Model geometry fields left at 0 are inferred from the data at hand
// (n_classes from the manifest's speakers, rows and frames from the
// archive's records).
struct RunConfig {
  FeatureConfig feature;
  ModelConfig model;
  TrainConfig train;
  SplitProtocol protocol = SplitProtocol::kEsdStyle;
  TrialScheme scheme = TrialScheme::kUtteranceRotation;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  bool skip_errors = false;
  double noise_ratio = 0.0;  // 0 disables the distorted pass
  std::string manifest_path;
  std::string archive_path;
  std::string model_path;
  std::string report_path;
  std::string out_dir;
  std::size_t synth_speakers = 8;
  std::size_t synth_utterances = 8;
  std::size_t synth_reps = 9;

  RunConfig();

  // Cross-field checks plus existence of every referenced path; the list
  // holds one line per violated field.
  std::vector<std::string> violations() const;
  // Throws ConfigError joining violations(), if any.
  void validate() const;
};

// Flat `section.key = value` lines; '#' starts a comment, blanks skipped.
// Malformed lines and duplicate keys are all named in one ParseError.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Reads either the flat text format or a flat JSON object (a previously
// written run.json); both formats carry identical keys.
std::map<std::string, std::string> load_config_file(const std::string& path);

// Applies every key onto cfg, collecting unknown keys and unparsable
// values, and throws one ConfigError naming all of them at once.
void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& kv);

// Fills the 0-valued model geometry fields from the archive.
void infer_model_geometry(ModelConfig& model, const FeatureArchive& archive);

// The resolved configuration as a flat JSON object, reusable as --config.
std::string run_config_json(const RunConfig& cfg, const std::string& command);
void save_run_json(const std::string& path, const RunConfig& cfg,
                   const std::string& command);

}  // namespace capsid
