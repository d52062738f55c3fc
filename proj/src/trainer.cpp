#include "capsid/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "capsid/adam.hpp"
#include "capsid/errors.hpp"
#include "capsid/log.hpp"
#include "capsid/ops.hpp"

namespace capsid {

namespace {

struct LabeledSet {
  std::vector<std::size_t> items;   // archive indices
  std::vector<std::size_t> labels;  // class per item
};

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

TensorPtr batch_tensor(const FeatureArchive& archive,
                       const Standardizer& st,
                       const std::vector<std::size_t>& items,
                       std::size_t begin, std::size_t count,
                       std::size_t rows, std::size_t frames) {
  auto input = make_tensor({count, rows, frames});
  for (std::size_t k = 0; k < count; ++k) {
    const FeatureMatrix f = st.apply(archive.features[items[begin + k]]);
    if (f.rows != rows || f.cols != frames)
      throw ShapeError("archived features are " + std::to_string(f.rows) +
                       "x" + std::to_string(f.cols) + " but the model wants " +
                       std::to_string(rows) + "x" + std::to_string(frames));
    std::copy(f.values.begin(), f.values.end(),
              input->value.begin() + k * rows * frames);
  }
  return input;
}

struct EvalPass {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalPass evaluate_split(Model& model, const FeatureArchive& archive,
                        const Standardizer& st, const LabeledSet& set,
                        std::size_t batch_size) {
  const std::size_t rows = model.config().input_rows;
  const std::size_t frames = model.config().input_frames;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t at = 0; at < set.items.size(); at += batch_size) {
    const std::size_t count = std::min(batch_size, set.items.size() - at);
    auto input = batch_tensor(archive, st, set.items, at, count, rows, frames);
    std::vector<std::size_t> labels(set.labels.begin() + at,
                                    set.labels.begin() + at + count);
    Graph g;
    auto fwd = model.forward(g, input, false);
    loss_sum += model.loss(g, fwd, input, labels)->scalar() *
                static_cast<double>(count);
    const auto picks = predict_classes(*fwd.scores);
    for (std::size_t k = 0; k < count; ++k) correct += picks[k] == labels[k];
  }
  EvalPass out;
  out.loss = loss_sum / static_cast<double>(set.items.size());
  out.accuracy =
      static_cast<double>(correct) / static_cast<double>(set.items.size());
  return out;
}

std::vector<std::vector<double>> snapshot(const std::vector<TensorPtr>& ts) {
  std::vector<std::vector<double>> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(t->value);
  return out;
}

void restore(const std::vector<TensorPtr>& ts,
             const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i]->value = snap[i];
}

}  // namespace

void TrainConfig::validate() const {
  std::vector<std::string> v;
  if (batch_size == 0) v.push_back("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) {
    std::ostringstream os;
    os << "learning_rate must be positive, got " << learning_rate;
    v.push_back(os.str());
  }
  if (patience == 0) v.push_back("patience must be at least 1");
  if (trials == 0) v.push_back("trials must be at least 1");
  if (!v.empty()) {
    std::string msg = "invalid train config: ";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) msg += "; ";
      msg += v[i];
    }
    throw ConfigError(msg);
  }
}

std::size_t TrainConfig::resolved_max_epochs(Architecture a) const {
  if (max_epochs) return max_epochs;
  return a == Architecture::kBaselineCnn ? 300 : 40;
}

void save_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path);
  os << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  char line[256];
  for (const auto& e : history.epochs) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc,
                  e.seconds);
    os << line;
  }
  if (!os) throw IoError("failed while writing " + path);
}

TrainResult train(Model model, const SplitPlan& split,
                  const FeatureArchive& archive, const TrainConfig& cfg) {
  cfg.validate();
  if (archive.features.size() != archive.manifest.entries.size())
    throw ContractError("archive holds " +
                        std::to_string(archive.features.size()) +
                        " feature matrices for " +
                        std::to_string(archive.manifest.entries.size()) +
                        " manifest entries");
  for (const auto idx : split.train_items)
    if (idx >= archive.features.size())
      throw ContractError("train item " + std::to_string(idx) +
                          " is outside the archive");
  for (const auto idx : split.test_items)
    if (idx >= archive.features.size())
      throw ContractError("test item " + std::to_string(idx) +
                          " is outside the archive");

  // Training must never touch test items.
  {
    std::set<std::size_t> test(split.test_items.begin(),
                               split.test_items.end());
    std::size_t leaked = 0;
    for (const auto idx : split.train_items) leaked += test.count(idx);
    if (leaked)
      throw ContractError("split leaks " + std::to_string(leaked) +
                          " test items into training");
  }

  for (const auto idx : split.train_items) {
    const auto& e = archive.manifest.entries[idx];
    if (e.emotion != Emotion::kNeutral)
      throw ProtocolError("train item " + std::to_string(idx) + " (" +
                          e.path + ") is " + emotion_name(e.emotion) +
                          "; training material must be neutral");
  }
  if (split.train_items.empty()) throw DataError("split has no train items");

  const auto classes = archive.manifest.speakers();
  if (classes.size() != model.config().n_classes)
    throw ConfigError("model expects " +
                      std::to_string(model.config().n_classes) +
                      " classes but the manifest names " +
                      std::to_string(classes.size()) + " speakers");

  // Speaker-stratified validation holdout: at least one item per speaker,
  // 10% of the speaker's items otherwise.
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (const auto idx : split.train_items)
    by_speaker[archive.manifest.entries[idx].speaker_id].push_back(idx);
  Rng val_rng(sub_seed(cfg.seed, "val"));
  LabeledSet fit_set, val_set;
  for (auto& [speaker, items] : by_speaker) {
    val_rng.shuffle(items);
    const std::size_t n_val = std::max<std::size_t>(1, items.size() / 10);
    if (n_val >= items.size())
      throw DataError("speaker " + speaker +
                      " has too few train items for a validation holdout");
    for (std::size_t i = 0; i < items.size(); ++i)
      (i < n_val ? val_set : fit_set).items.push_back(items[i]);
  }
  std::sort(fit_set.items.begin(), fit_set.items.end());
  std::sort(val_set.items.begin(), val_set.items.end());
  fit_set.labels = class_labels(archive.manifest, fit_set.items, classes);
  val_set.labels = class_labels(archive.manifest, val_set.items, classes);

  Standardizer st;
  {
    std::vector<FeatureMatrix> fit_features;
    fit_features.reserve(fit_set.items.size());
    for (const auto idx : fit_set.items)
      fit_features.push_back(archive.features[idx]);
    st.fit(fit_features);
  }

  const std::size_t rows = model.config().input_rows;
  const std::size_t frames = model.config().input_frames;
  const std::size_t max_epochs =
      cfg.resolved_max_epochs(model.config().architecture);
  Adam opt(model.parameters(), AdamConfig{cfg.learning_rate, 0.9, 0.999,
                                          1e-8});

  TrainResult out{std::move(model), st, TrainHistory{}, 0};
  Model& net = out.model;

  double best_val = 0.0;
  std::size_t stale = 0;
  std::vector<std::vector<double>> best_params, best_buffers;

  std::vector<std::size_t> order(fit_set.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    const auto tick = std::chrono::steady_clock::now();
    Rng shuffle_rng(sub_seed(cfg.seed, "shuffle", epoch));
    shuffle_rng.shuffle(order);
    Rng dropout_rng(sub_seed(cfg.seed, "dropout", epoch));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t at = 0; at < order.size();
         at += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - at);
      std::vector<std::size_t> items(count), labels(count);
      for (std::size_t k = 0; k < count; ++k) {
        items[k] = fit_set.items[order[at + k]];
        labels[k] = fit_set.labels[order[at + k]];
      }
      try {
        auto input = batch_tensor(archive, st, items, 0, count, rows, frames);
        Graph g;
        auto fwd = net.forward(g, input, true, &dropout_rng, &labels);
        auto loss = net.loss(g, fwd, input, labels);
        const double value = loss->scalar();
        if (!std::isfinite(value))
          throw NumericFault("loss is not finite");
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        loss_sum += value * static_cast<double>(count);
        const auto picks = predict_classes(*fwd.scores);
        for (std::size_t k = 0; k < count; ++k)
          correct += picks[k] == labels[k];
      } catch (const NumericFault& e) {
        throw NumericFault("training diverged at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index + 1) + ": " + e.what());
      }
    }

    const EvalPass val = evaluate_split(net, archive, st, val_set,
                                        cfg.batch_size);
    const auto tock = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) /
                    static_cast<double>(order.size());
    rec.val_loss = val.loss;
    rec.val_acc = val.accuracy;
    rec.seconds = std::max(
        std::chrono::duration<double>(tock - tick).count(), 1e-9);
    out.history.epochs.push_back(rec);
    logging::debug("epoch " + std::to_string(epoch) + " train_loss " +
                   std::to_string(rec.train_loss) + " val_loss " +
                   std::to_string(rec.val_loss));

    if (out.best_epoch == 0 || val.loss < best_val) {
      best_val = val.loss;
      out.best_epoch = epoch;
      stale = 0;
      best_params = snapshot(net.parameters());
      best_buffers = snapshot(net.buffers());
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  restore(net.parameters(), best_params);
  restore(net.buffers(), best_buffers);
  return out;
}

TimingReport timing_report(const TrainHistory& a, const TrainHistory& b) {
  if (a.epochs.empty() || b.epochs.empty())
    throw ContractError("timing comparison needs two non-empty histories");
  auto summarize = [](const TrainHistory& h) {
    TimingSummary s;
    s.epochs = h.epochs.size();
    double total = 0.0;
    for (const auto& e : h.epochs) total += e.seconds;
    s.mean_epoch_seconds = total / static_cast<double>(h.epochs.size());
    s.total_minutes = total / 60.0;
    return s;
  };
  return TimingReport{summarize(a), summarize(b)};
}

std::string timing_table(const TimingReport& report, const std::string& name_a,
                         const std::string& name_b) {
  std::ostringstream os;
  os << "model,epochs,mean_epoch_seconds,total_minutes\n";
  auto row = [&](const std::string& name, const TimingSummary& s) {
    char line[160];
    std::snprintf(line, sizeof line, "%s,%zu,%.6f,%.6f\n", name.c_str(),
                  s.epochs, s.mean_epoch_seconds, s.total_minutes);
    os << line;
  };
  row(name_a, report.first);
  row(name_b, report.second);
  return os.str();
}

}  // namespace capsid
