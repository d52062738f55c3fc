#include "capsid/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "capsid/errors.hpp"
#include "capsid/log.hpp"
#include "capsid/rng.hpp"
#include "capsid/wav.hpp"

namespace capsid {

namespace {

std::string pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename Fn>
void tagged(const std::string& tag, Fn&& fn) {
  try {
    fn();
  } catch (const ParseError& e) {
    throw ParseError(tag + ": " + e.what());
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(tag + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(tag + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(tag + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError(tag + ": " + e.what());
  } catch (const NumericFault& e) {
    throw NumericFault(tag + ": " + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(tag + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(tag + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + ": " + e.what());
  }
}

std::vector<std::size_t> class_labels(const CorpusManifest& manifest,
                                      const std::vector<std::size_t>& items,
                                      const std::vector<std::string>& classes) {
  std::vector<std::size_t> out;
  out.reserve(items.size());
  for (const auto idx : items) {
    const auto& sp = manifest.entries[idx].speaker_id;
    const auto it = std::lower_bound(classes.begin(), classes.end(), sp);
    if (it == classes.end() || *it != sp)
      throw DataError("speaker '" + sp + "' is missing from the class list");
    out.push_back(static_cast<std::size_t>(it - classes.begin()));
  }
  return out;
}

nlohmann::json model_config_json(const ModelConfig& c) {
  nlohmann::json j;
  j["architecture"] = architecture_name(c.architecture);
  j["n_classes"] = c.n_classes;
  j["input_rows"] = c.input_rows;
  j["input_frames"] = c.input_frames;
  j["routing_iterations"] = c.routing_iterations;
  j["decoder_enabled"] = c.decoder_enabled;
  j["decoder_hidden"] = c.decoder_hidden;
  j["dropout_rate"] = c.dropout_rate;
  j["conv1_kernel_height"] = c.conv1_kernel_height;
  j["loss"] = {{"m_plus", c.loss.m_plus},
               {"m_minus", c.loss.m_minus},
               {"lambda", c.loss.lambda},
               {"alpha", c.loss.alpha}};
  return j;
}

void write_trial_config(const std::string& path, const ModelConfig& mc,
                        const TrainConfig& tc, SplitProtocol protocol,
                        TrialScheme scheme, std::size_t trial) {
  nlohmann::json j;
  j["trial"] = trial;
  j["seed"] = tc.seed;
  j["protocol"] = split_protocol_name(protocol);
  j["scheme"] = trial_scheme_name(scheme);
  j["model"] = model_config_json(mc);
  j["train"] = {{"batch_size", tc.batch_size},
                {"learning_rate", tc.learning_rate},
                {"max_epochs", tc.resolved_max_epochs(mc.architecture)},
                {"patience", tc.patience},
                {"trials", tc.trials}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::set<std::string> train_utterances(const CorpusManifest& manifest,
                                       const SplitPlan& plan) {
  std::set<std::string> out;
  for (const auto idx : plan.train_items)
    out.insert(manifest.entries[idx].utterance_id);
  return out;
}

EvalReport average_reports(const std::vector<TrialResult>& trials) {
  EvalReport avg;
  avg.speakers = trials.front().report.speakers;
  const std::size_t n = avg.speakers.size();
  avg.confusion.assign(n, std::vector<std::size_t>(n, 0));
  std::map<Emotion, std::pair<double, std::size_t>> emo_sums;
  std::map<std::string, std::pair<ClassMetrics, std::size_t>> spk_sums;
  for (const auto& t : trials) {
    const EvalReport& r = t.report;
    avg.overall_accuracy += r.overall_accuracy;
    avg.auc_macro += r.auc_macro;
    avg.n_test_items += r.n_test_items;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) avg.confusion[i][j] += r.confusion[i][j];
    for (const auto& [emo, a] : r.per_emotion_accuracy) {
      emo_sums[emo].first += a;
      emo_sums[emo].second += 1;
    }
    for (const auto& [id, m] : r.per_speaker) {
      auto& slot = spk_sums[id];
      slot.first.precision += m.precision;
      slot.first.recall += m.recall;
      slot.first.f1 += m.f1;
      slot.second += 1;
    }
    for (const auto& w : r.warnings)
      avg.warnings.push_back("trial " + std::to_string(t.plan.trial_index) +
                             ": " + w);
  }
  const double count = static_cast<double>(trials.size());
  avg.overall_accuracy /= count;
  avg.auc_macro /= count;
  for (const auto& [emo, s] : emo_sums)
    avg.per_emotion_accuracy[emo] = s.first / static_cast<double>(s.second);
  for (const auto& [id, s] : spk_sums) {
    ClassMetrics m = s.first;
    const double c = static_cast<double>(s.second);
    avg.per_speaker[id] = {m.precision / c, m.recall / c, m.f1 / c};
  }
  return avg;
}

}  // namespace

EvalReport evaluate(Model& model, const Standardizer& standardizer,
                    const FeatureArchive& archive,
                    const std::vector<std::size_t>& test_items,
                    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!standardizer.fitted())
    throw ContractError("evaluate needs a fitted standardizer");
  if (archive.features.size() != archive.manifest.entries.size())
    throw ContractError("archive holds " +
                        std::to_string(archive.features.size()) +
                        " feature maps for " +
                        std::to_string(archive.manifest.entries.size()) +
                        " manifest entries");
  if (test_items.empty())
    throw ContractError("evaluate needs at least one test item");
  for (const auto idx : test_items)
    if (idx >= archive.features.size())
      throw ContractError("test item " + std::to_string(idx) +
                          " is out of range for an archive of " +
                          std::to_string(archive.features.size()));

  const std::vector<std::string> speakers = archive.manifest.speakers();
  const std::size_t n = speakers.size();
  if (model.config().n_classes != n)
    throw ConfigError("model expects " +
                      std::to_string(model.config().n_classes) +
                      " classes but the manifest names " + std::to_string(n) +
                      " speakers");

  const std::size_t rows = model.config().input_rows;
  const std::size_t frames = model.config().input_frames;
  const std::vector<std::size_t> truth =
      class_labels(archive.manifest, test_items, speakers);

  std::vector<double> scores;
  scores.reserve(test_items.size() * n);
  std::vector<std::size_t> predicted;
  predicted.reserve(test_items.size());
  for (std::size_t at = 0; at < test_items.size(); at += batch_size) {
    const std::size_t count = std::min(batch_size, test_items.size() - at);
    auto input = make_tensor({count, rows, frames});
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = test_items[at + k];
      const FeatureMatrix f = standardizer.apply(archive.features[idx]);
      if (f.rows != rows || f.cols != frames)
        throw ShapeError("test item " + std::to_string(idx) + " is " +
                         std::to_string(f.rows) + "x" + std::to_string(f.cols) +
                         " but the model wants " + std::to_string(rows) + "x" +
                         std::to_string(frames));
      std::copy(f.values.begin(), f.values.end(),
                input->value.begin() + k * rows * frames);
    }
    Graph g;
    auto fwd = model.forward(g, input, false);
    scores.insert(scores.end(), fwd.scores->value.begin(),
                  fwd.scores->value.end());
    const auto picks = predict_classes(*fwd.scores);
    predicted.insert(predicted.end(), picks.begin(), picks.end());
  }

  EvalReport report;
  report.speakers = speakers;
  report.n_test_items = test_items.size();
  report.confusion.assign(n, std::vector<std::size_t>(n, 0));
  std::map<Emotion, std::pair<std::size_t, std::size_t>> emo_counts;
  for (std::size_t i = 0; i < test_items.size(); ++i) {
    report.confusion[truth[i]][predicted[i]] += 1;
    auto& slot = emo_counts[archive.manifest.entries[test_items[i]].emotion];
    slot.first += truth[i] == predicted[i];
    slot.second += 1;
  }
  const ConfusionMetrics cm = confusion_metrics(report.confusion);
  report.overall_accuracy = 100.0 * cm.accuracy;
  for (std::size_t c = 0; c < n; ++c)
    report.per_speaker[speakers[c]] = cm.per_class[c];
  for (const auto& [emo, counts] : emo_counts)
    report.per_emotion_accuracy[emo] = 100.0 *
                                       static_cast<double>(counts.first) /
                                       static_cast<double>(counts.second);

  std::vector<std::size_t> skipped;
  report.auc_macro = auc_macro(scores, n, truth, &skipped);
  for (const auto c : skipped)
    report.warnings.push_back(
        "speaker '" + speakers[c] +
        "' lacks positive or negative test items; skipped in the auc average");
  return report;
}

const std::vector<Emotion>& studied_emotions() {
  static const std::vector<Emotion> kSix = {
      Emotion::kNeutral, Emotion::kHappy, Emotion::kSad,
      Emotion::kAngry,   Emotion::kFear,  Emotion::kDisgust};
  return kSix;
}

EmotionTable per_emotion_report(const EvalReport& report) {
  return per_emotion_report(report, studied_emotions());
}

EmotionTable per_emotion_report(const EvalReport& report,
                                const std::vector<Emotion>& expected) {
  if (report.per_emotion_accuracy.empty())
    throw ContractError(
        "the per-emotion table needs at least one emotion with test items");
  EmotionTable table;
  double sum = 0.0;
  for (const auto& [emo, acc] : report.per_emotion_accuracy) {
    table.order.push_back(emo);
    table.accuracy[emo] = acc;
    sum += acc;
  }
  table.average = sum / static_cast<double>(table.order.size());
  for (const auto emo : expected) {
    if (table.accuracy.count(emo)) continue;
    table.warnings.push_back(std::string("emotion ") + emotion_name(emo) +
                             " has zero test items and is omitted");
  }
  return table;
}

std::string emotion_table_csv(const EmotionTable& table) {
  std::string head;
  std::string row;
  for (const auto emo : table.order) {
    head += emotion_name(emo);
    head += ',';
    row += pct(table.accuracy.at(emo));
    row += ',';
  }
  head += "average\n";
  row += pct(table.average);
  row += '\n';
  return head + row;
}

const char* trial_scheme_name(TrialScheme s) {
  switch (s) {
    case TrialScheme::kUtteranceRotation:
      return "rotation";
    case TrialScheme::kRepetitionFolds:
      return "folds";
  }
  return "rotation";
}

TrialScheme trial_scheme_from_name(const std::string& name) {
  if (name == "rotation") return TrialScheme::kUtteranceRotation;
  if (name == "folds") return TrialScheme::kRepetitionFolds;
  throw ConfigError("unknown trial scheme '" + name +
                    "'; expected rotation or folds");
}

TrialsResult run_trials(const FeatureArchive& features,
                        const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, SplitProtocol protocol,
                        TrialScheme scheme, const std::string& checkpoint_dir) {
  model_cfg.validate();
  train_cfg.validate();
  const CorpusManifest& manifest = features.manifest;
  const std::size_t n_trials = train_cfg.trials;

  std::vector<SplitPlan> plans;
  if (scheme == TrialScheme::kUtteranceRotation) {
    if (protocol == SplitProtocol::kRavdessStyle) {
      for (std::size_t k = 0; k < n_trials; ++k)
        plans.push_back(make_split_plan(manifest, protocol,
                                        train_cfg.seed + k,
                                        static_cast<int>(k), k % 2 == 1));
    } else {
      std::vector<std::set<std::string>> seen;
      std::uint64_t probe = train_cfg.seed;
      for (std::size_t k = 0; k < n_trials; ++k) {
        SplitPlan plan;
        std::size_t attempts = 0;
        for (;;) {
          plan = make_split_plan(manifest, protocol, probe++,
                                 static_cast<int>(k));
          const auto utts = train_utterances(manifest, plan);
          if (std::find(seen.begin(), seen.end(), utts) == seen.end()) {
            seen.push_back(utts);
            break;
          }
          if (++attempts > 512)
            throw ConfigError(
                "the manifest does not admit " + std::to_string(n_trials) +
                " distinct train-utterance rotations; got stuck after " +
                std::to_string(k));
        }
        plans.push_back(std::move(plan));
      }
    }
  } else {
    const SplitPlan base = make_split_plan(manifest, protocol, train_cfg.seed);
    std::set<std::uint32_t> rep_values;
    for (const auto idx : base.train_items)
      rep_values.insert(manifest.entries[idx].repetition);
    if (rep_values.size() < n_trials)
      throw ConfigError("repetition folds need at least " +
                        std::to_string(n_trials) +
                        " distinct repetitions in the training material, "
                        "found " +
                        std::to_string(rep_values.size()));
    std::map<std::uint32_t, std::size_t> fold_of;
    std::size_t rank = 0;
    for (const auto rep : rep_values) fold_of[rep] = rank++ % n_trials;
    for (std::size_t k = 0; k < n_trials; ++k) {
      SplitPlan plan;
      plan.trial_index = static_cast<int>(k);
      plan.seed = train_cfg.seed;
      plan.protocol = protocol;
      for (const auto idx : base.train_items) {
        if (fold_of[manifest.entries[idx].repetition] == k)
          plan.test_items.push_back(idx);
        else
          plan.train_items.push_back(idx);
      }
      plans.push_back(std::move(plan));
    }
  }

  TrialsResult out;
  out.trials.reserve(n_trials);
  for (std::size_t k = 0; k < n_trials; ++k) {
    TrainConfig tc = train_cfg;
    tc.seed = sub_seed(train_cfg.seed, "trial", k);
    tagged("trial " + std::to_string(k), [&] {
      TrainResult tr = train(Model(model_cfg, tc.seed), plans[k], features, tc);
      EvalReport report = evaluate(tr.model, tr.standardizer, features,
                                   plans[k].test_items, tc.batch_size);
      logging::info("trial " + std::to_string(k) + "/" +
                    std::to_string(n_trials) + ": accuracy " +
                    pct(report.overall_accuracy) + "%, auc " +
                    pct(report.auc_macro));
      if (!checkpoint_dir.empty()) {
        const std::filesystem::path dir =
            std::filesystem::path(checkpoint_dir) /
            ("trial" + std::to_string(k));
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec)
          throw IoError("cannot create '" + dir.string() +
                        "': " + ec.message());
        save_model((dir / "best.capw").string(), tr.model, tr.standardizer);
        write_trial_config((dir / "config.json").string(), model_cfg, tc,
                           protocol, scheme, k);
      }
      out.trials.push_back(
          {std::move(plans[k]), std::move(tr), std::move(report)});
    });
  }
  out.averaged = average_reports(out.trials);
  return out;
}

WilcoxonResult wilcoxon_trials(const TrialsResult& a, const TrialsResult& b) {
  std::vector<double> acc_a;
  std::vector<double> acc_b;
  for (const auto& t : a.trials) acc_a.push_back(t.report.overall_accuracy);
  for (const auto& t : b.trials) acc_b.push_back(t.report.overall_accuracy);
  return wilcoxon_signed_rank(acc_a, acc_b);
}

AblationGrid ablation_grid(const FeatureArchive& features,
                           const ModelConfig& base_cfg,
                           const TrainConfig& train_cfg,
                           SplitProtocol protocol) {
  if (base_cfg.architecture == Architecture::kBaselineCnn)
    throw ConfigError(
        "the ablation sweeps routing iterations; it needs a capsule "
        "architecture");
  train_cfg.validate();
  AblationGrid grid;
  grid.plan = make_split_plan(features.manifest, protocol, train_cfg.seed);
  for (int r = 1; r <= 5; ++r) {
    for (const bool decoder : {true, false}) {
      ModelConfig mc = base_cfg;
      mc.routing_iterations = r;
      mc.decoder_enabled = decoder;
      const std::string tag = "ablation cell (routing=" + std::to_string(r) +
                              ", decoder=" + (decoder ? "on" : "off") + ")";
      tagged(tag, [&] {
        mc.validate();
        TrainResult tr =
            train(Model(mc, train_cfg.seed), grid.plan, features, train_cfg);
        double best_train = 0.0;
        for (const auto& e : tr.history.epochs)
          best_train = std::max(best_train, e.train_acc);
        EvalReport report =
            evaluate(tr.model, tr.standardizer, features,
                     grid.plan.test_items, train_cfg.batch_size);
        logging::info(tag + ": train accuracy " + pct(100.0 * best_train) +
                      "%, test accuracy " + pct(report.overall_accuracy) +
                      "%");
        grid.cells.push_back({r, decoder, best_train, std::move(report)});
      });
    }
  }
  return grid;
}

std::string ablation_csv(const AblationGrid& grid) {
  std::string out = "routing_iterations,decoder,train_accuracy,test_accuracy,auc\n";
  for (const auto& cell : grid.cells) {
    out += std::to_string(cell.routing_iterations);
    out += ',';
    out += cell.decoder_enabled ? "on" : "off";
    out += ',';
    out += pct(cell.train_accuracy);
    out += ',';
    out += pct(cell.report.overall_accuracy);
    out += ',';
    out += pct(cell.report.auc_macro);
    out += '\n';
  }
  return out;
}

NoiseReport noise_eval(Model& model, const Standardizer& standardizer,
                       const CorpusManifest& manifest,
                       const std::vector<std::size_t>& test_items,
                       const FeatureConfig& feature_cfg, double ratio,
                       std::uint64_t seed, std::size_t batch_size) {
  if (!(ratio > 0.0)) {
    std::ostringstream os;
    os << "noise ratio must be positive, got " << ratio;
    throw ConfigError(os.str());
  }
  if (test_items.empty())
    throw ContractError("the noise study needs at least one test item");
  for (const auto idx : test_items)
    if (idx >= manifest.entries.size())
      throw ContractError("test item " + std::to_string(idx) +
                          " is out of range for a manifest of " +
                          std::to_string(manifest.entries.size()));

  FeatureArchive clean;
  FeatureArchive noisy;
  clean.manifest = manifest;
  noisy.manifest = manifest;
  clean.features.resize(manifest.entries.size());
  noisy.features.resize(manifest.entries.size());
  for (const auto idx : test_items) {
    const auto& entry = manifest.entries[idx];
    tagged("test item " + std::to_string(idx) + " ('" + entry.path + "')",
           [&] {
             const AudioClip clip = load_wav(entry.path);
             clean.features[idx] = extract_features(clip, feature_cfg);
             noisy.features[idx] = extract_features(
                 add_noise(clip, ratio, sub_seed(seed, "noise", idx)),
                 feature_cfg);
           });
  }

  NoiseReport report;
  report.ratio = ratio;
  report.clean = evaluate(model, standardizer, clean, test_items, batch_size);
  report.distorted =
      evaluate(model, standardizer, noisy, test_items, batch_size);
  for (const auto& w : report.clean.warnings)
    report.warnings.push_back("clean: " + w);
  for (const auto& w : report.distorted.warnings)
    report.warnings.push_back("distorted: " + w);
  if (report.distorted.overall_accuracy >
      report.clean.overall_accuracy + 1e-12) {
    const std::string note =
        "distorted accuracy " + pct(report.distorted.overall_accuracy) +
        "% exceeds clean accuracy " + pct(report.clean.overall_accuracy) + "%";
    report.warnings.push_back(note);
    logging::info("noise study: " + note);
  }
  return report;
}

std::string noise_table_csv(const NoiseReport& report) {
  std::string out = "emotion,clean,distorted\n";
  double clean_sum = 0.0;
  double noisy_sum = 0.0;
  std::size_t rows = 0;
  for (const auto& [emo, acc] : report.clean.per_emotion_accuracy) {
    const auto it = report.distorted.per_emotion_accuracy.find(emo);
    if (it == report.distorted.per_emotion_accuracy.end()) continue;
    out += emotion_name(emo);
    out += ',';
    out += pct(acc);
    out += ',';
    out += pct(it->second);
    out += '\n';
    clean_sum += acc;
    noisy_sum += it->second;
    ++rows;
  }
  if (rows > 0) {
    out += "average,";
    out += pct(clean_sum / static_cast<double>(rows));
    out += ',';
    out += pct(noisy_sum / static_cast<double>(rows));
    out += '\n';
  }
  return out;
}

std::string confusion_csv(const EvalReport& report) {
  std::string out = "speaker";
  for (const auto& id : report.speakers) {
    out += ',';
    out += id;
  }
  out += '\n';
  for (std::size_t i = 0; i < report.confusion.size(); ++i) {
    out += report.speakers[i];
    for (const auto count : report.confusion[i]) {
      out += ',';
      out += std::to_string(count);
    }
    out += '\n';
  }
  return out;
}

void save_confusion_pgm(const std::string& path, const EvalReport& report) {
  const std::size_t n = report.confusion.size();
  if (n == 0) throw ContractError("cannot render an empty confusion matrix");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "P5\n" << n << " " << n << "\n255\n";
  for (const auto& row : report.confusion) {
    std::size_t total = 0;
    for (const auto count : row) total += count;
    for (const auto count : row) {
      double share = 0.0;
      if (total > 0)
        share = static_cast<double>(count) / static_cast<double>(total);
      const int pixel = 255 - static_cast<int>(std::lround(255.0 * share));
      out.put(static_cast<char>(static_cast<unsigned char>(pixel)));
    }
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::json j;
  j["overall_accuracy"] = report.overall_accuracy;
  j["auc_macro"] = report.auc_macro;
  j["n_test_items"] = report.n_test_items;
  nlohmann::json emotions = nlohmann::json::object();
  for (const auto& [emo, acc] : report.per_emotion_accuracy)
    emotions[emotion_name(emo)] = acc;
  j["per_emotion_accuracy"] = emotions;
  nlohmann::json speakers = nlohmann::json::object();
  for (const auto& [id, m] : report.per_speaker)
    speakers[id] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  j["per_speaker"] = speakers;
  j["speakers"] = report.speakers;
  j["confusion"] = report.confusion;
  j["warnings"] = report.warnings;
  return j.dump(2) + "\n";
}

void save_eval_report_json(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << eval_report_json(report);
  if (!out) throw IoError("failed writing '" + path + "'");
}

EvalReport eval_report_from_json(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    EvalReport r;
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    r.auc_macro = j.at("auc_macro").get<double>();
    r.n_test_items = j.at("n_test_items").get<std::size_t>();
    for (const auto& [name, acc] :
         j.at("per_emotion_accuracy").items())
      r.per_emotion_accuracy[emotion_from_name(name)] = acc.get<double>();
    for (const auto& [id, m] : j.at("per_speaker").items())
      r.per_speaker[id] = {m.at("precision").get<double>(),
                           m.at("recall").get<double>(),
                           m.at("f1").get<double>()};
    r.speakers = j.at("speakers").get<std::vector<std::string>>();
    r.confusion =
        j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    if (j.count("warnings"))
      r.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (r.confusion.size() != r.speakers.size())
      throw ParseError("report json: confusion has " +
                       std::to_string(r.confusion.size()) + " rows for " +
                       std::to_string(r.speakers.size()) + " speakers");
    for (const auto& row : r.confusion)
      if (row.size() != r.speakers.size())
        throw ParseError("report json: ragged confusion matrix");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("report json: ") + e.what());
  }
}

EvalReport load_eval_report_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return eval_report_from_json(text);
}

std::string eval_report_csv(const EvalReport& report) {
  std::string out = "speaker,precision,recall,f1\n";
  for (const auto& [id, m] : report.per_speaker) {
    out += id;
    out += ',';
    out += pct(m.precision);
    out += ',';
    out += pct(m.recall);
    out += ',';
    out += pct(m.f1);
    out += '\n';
  }
  return out;
}

}  // namespace capsid
