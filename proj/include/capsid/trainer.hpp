#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsid/corpus.hpp"
#include "capsid/feature_archive.hpp"
#include "capsid/models.hpp"

namespace capsid {

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  // 0 resolves to the architecture default: 40 for capsule models, 300 for
  // the baseline CNN.
  std::size_t max_epochs = 0;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::size_t trials = 5;

  void validate() const;
  std::size_t resolved_max_epochs(Architecture a) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

void save_history_csv(const std::string& path, const TrainHistory& history);

struct TrainResult {
  Model model;
  Standardizer standardizer;
  TrainHistory history;
  std::size_t best_epoch = 0;  // epoch whose parameters were kept
};

// Trains on the plan's neutral-only items: 10% of them (speaker-stratified,
// at least one per speaker) are held out for validation-loss early stopping;
// the rest feed seeded shuffled mini-batches through Adam. The returned
// model carries the parameters of the best validation epoch. Test items are
// never read.
TrainResult train(Model model, const SplitPlan& split,
                  const FeatureArchive& features, const TrainConfig& cfg);

struct TimingSummary {
  std::size_t epochs = 0;
  double mean_epoch_seconds = 0.0;
  double total_minutes = 0.0;
};

struct TimingReport {
  TimingSummary first;
  TimingSummary second;
};

TimingReport timing_report(const TrainHistory& a, const TrainHistory& b);

// Two-row text table of the comparison, labeled by the given names.
std::string timing_table(const TimingReport& report, const std::string& name_a,
                         const std::string& name_b);

}  // namespace capsid
