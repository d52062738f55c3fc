#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "capsid/metrics.hpp"
#include "capsid/trainer.hpp"

namespace capsid {

struct EvalReport {
  double overall_accuracy = 0.0;  // percent
  std::map<Emotion, double> per_emotion_accuracy;  // percent, present only
  std::map<std::string, ClassMetrics> per_speaker;
  double auc_macro = 0.0;  // in [0, 1]
  std::vector<std::vector<std::size_t>> confusion;  // row = true speaker
  std::vector<std::string> speakers;  // confusion row and column order
  std::size_t n_test_items = 0;
  std::vector<std::string> warnings;
};

// Scores every test item with the frozen model and assembles the full
// report: confusion matrix over the manifest's sorted speakers, overall and
// per-emotion accuracy, per-speaker precision/recall/f1, and macro AUC over
// the score matrix. Speakers the AUC has to skip are noted in warnings.
EvalReport evaluate(Model& model, const Standardizer& standardizer,
                    const FeatureArchive& archive,
                    const std::vector<std::size_t>& test_items,
                    std::size_t batch_size = 64);

// The six emotional states every corpus in this project labels.
const std::vector<Emotion>& studied_emotions();

struct EmotionTable {
  std::vector<Emotion> order;  // emotions present, in enum order
  std::map<Emotion, double> accuracy;  // percent
  double average = 0.0;  // unweighted mean over the present emotions
  std::vector<std::string> warnings;  // expected emotions with no test items
};

// Pivots a report into the one-row accuracy-by-emotion table. Expected
// emotions missing from the report are omitted and noted in warnings.
EmotionTable per_emotion_report(const EvalReport& report);
EmotionTable per_emotion_report(const EvalReport& report,
                                const std::vector<Emotion>& expected);

// Header row of emotion names plus "average", then one row of values.
std::string emotion_table_csv(const EmotionTable& table);

enum class TrialScheme { kUtteranceRotation, kRepetitionFolds };

const char* trial_scheme_name(TrialScheme s);
TrialScheme trial_scheme_from_name(const std::string& name);

struct TrialResult {
  SplitPlan plan;
  TrainResult train;
  EvalReport report;
};

struct TrialsResult {
  std::vector<TrialResult> trials;
  // Scalar metrics are arithmetic means over trials; the confusion matrix
  // and item count are sums.
  EvalReport averaged;
};

// Runs cfg.trials full train/evaluate rounds and averages the reports.
//  * rotation: each trial draws a fresh train-utterance subset; subsets are
//    forced distinct for the seeded protocols, and the two-statement
//    protocol alternates which statement trains.
//  * repetition folds: one base split; each trial holds a different
//    repetition fold of the neutral training material out as its test set.
// Per-trial errors are rethrown with the trial index prefixed. When
// checkpoint_dir is set, trial k saves <dir>/trial<k>/best.capw plus a
// config.json describing the run.
TrialsResult run_trials(const FeatureArchive& features,
                        const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, SplitProtocol protocol,
                        TrialScheme scheme = TrialScheme::kUtteranceRotation,
                        const std::string& checkpoint_dir = "");

// Paired signed-rank test over the two runs' per-trial accuracies.
WilcoxonResult wilcoxon_trials(const TrialsResult& a, const TrialsResult& b);

struct AblationCell {
  int routing_iterations = 0;
  bool decoder_enabled = false;
  double train_accuracy = 0.0;  // best epoch, fraction in [0, 1]
  EvalReport report;
};

struct AblationGrid {
  SplitPlan plan;  // shared by every cell
  std::vector<AblationCell> cells;  // routing 1..5 x decoder {on, off}
};

// Trains the capsule model ten times on one shared split, sweeping routing
// iterations 1 through 5 with the decoder on and off. Cell errors are
// rethrown with the cell coordinates prefixed.
AblationGrid ablation_grid(const FeatureArchive& features,
                           const ModelConfig& base_cfg,
                           const TrainConfig& train_cfg,
                           SplitProtocol protocol);

// Header `routing_iterations,decoder,train_accuracy,test_accuracy,auc`.
std::string ablation_csv(const AblationGrid& grid);

struct NoiseReport {
  double ratio = 0.0;
  EvalReport clean;
  EvalReport distorted;
  std::vector<std::string> warnings;
};

// Re-extracts features for the test items from their audio files, once
// untouched and once with additive noise at the given signal-to-noise
// amplitude ratio, then evaluates the same model on both. A distorted
// accuracy above the clean one is recorded as a warning, not an error.
NoiseReport noise_eval(Model& model, const Standardizer& standardizer,
                       const CorpusManifest& manifest,
                       const std::vector<std::size_t>& test_items,
                       const FeatureConfig& feature_cfg, double ratio,
                       std::uint64_t seed, std::size_t batch_size = 64);

// Rows of `emotion,clean,distorted` percentages plus an average row.
std::string noise_table_csv(const NoiseReport& report);

// Header `speaker,<id>,...`, then one count row per true speaker.
std::string confusion_csv(const EvalReport& report);

// 8-bit binary grayscale image, one pixel per confusion cell, where darker
// means a larger share of the row's items.
void save_confusion_pgm(const std::string& path, const EvalReport& report);

// Canonical JSON rendering (keys sorted, two-space indent).
std::string eval_report_json(const EvalReport& report);
void save_eval_report_json(const std::string& path, const EvalReport& report);

// Inverse of eval_report_json; throws ParseError on malformed input.
EvalReport eval_report_from_json(const std::string& text);
EvalReport load_eval_report_json(const std::string& path);

// Per-speaker table: `speaker,precision,recall,f1`.
std::string eval_report_csv(const EvalReport& report);

}  // namespace capsid
