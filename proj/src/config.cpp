#include "capsid/config.hpp"

#include <cctype>
#include <concepts>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "capsid/errors.hpp"

namespace capsid {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

class Applier {
 public:
  explicit Applier(RunConfig& cfg) : cfg_(cfg) {}

  void apply(const std::string& key, const std::string& value) {
    if (key == "feature.frame_ms") return set(value, cfg_.feature.frame_ms);
    if (key == "feature.hop_ms") return set(value, cfg_.feature.hop_ms);
    if (key == "feature.n_fft") return set(value, cfg_.feature.n_fft);
    if (key == "feature.n_mel_filters")
      return set(value, cfg_.feature.n_mel_filters);
    if (key == "feature.n_cepstra") return set(value, cfg_.feature.n_cepstra);
    if (key == "feature.fmin_hz") return set(value, cfg_.feature.fmin_hz);
    if (key == "feature.fmax_hz") return set(value, cfg_.feature.fmax_hz);
    if (key == "feature.target_frames")
      return set(value, cfg_.feature.target_frames);
    if (key == "feature.pre_emphasis")
      return set(value, cfg_.feature.pre_emphasis);
    if (key == "feature.delta_window")
      return set(value, cfg_.feature.delta_window);

    if (key == "model.architecture") {
      return parse_enum(key, value, [&](const std::string& v) {
        cfg_.model.architecture = architecture_from_name(v);
      });
    }
    if (key == "model.n_classes") return set(value, cfg_.model.n_classes);
    if (key == "model.input_rows") return set(value, cfg_.model.input_rows);
    if (key == "model.input_frames")
      return set(value, cfg_.model.input_frames);
    if (key == "model.routing_iterations")
      return set(value, cfg_.model.routing_iterations);
    if (key == "model.decoder_enabled")
      return set(value, cfg_.model.decoder_enabled);
    if (key == "model.decoder_hidden")
      return set(value, cfg_.model.decoder_hidden);
    if (key == "model.dropout_rate")
      return set(value, cfg_.model.dropout_rate);
    if (key == "model.conv1_kernel_height")
      return set(value, cfg_.model.conv1_kernel_height);

    if (key == "loss.m_plus") return set(value, cfg_.model.loss.m_plus);
    if (key == "loss.m_minus") return set(value, cfg_.model.loss.m_minus);
    if (key == "loss.lambda") return set(value, cfg_.model.loss.lambda);
    if (key == "loss.alpha") return set(value, cfg_.model.loss.alpha);

    if (key == "train.batch_size") return set(value, cfg_.train.batch_size);
    if (key == "train.learning_rate")
      return set(value, cfg_.train.learning_rate);
    if (key == "train.max_epochs") return set(value, cfg_.train.max_epochs);
    if (key == "train.patience") return set(value, cfg_.train.patience);
    if (key == "train.trials") return set(value, cfg_.train.trials);

    if (key == "run.protocol") {
      return parse_enum(key, value, [&](const std::string& v) {
        cfg_.protocol = split_protocol_from_name(v);
      });
    }
    if (key == "run.scheme") {
      return parse_enum(key, value, [&](const std::string& v) {
        cfg_.scheme = trial_scheme_from_name(v);
      });
    }
    if (key == "run.seed") return set(value, cfg_.seed);
    if (key == "run.workers") return set(value, cfg_.workers);
    if (key == "run.skip_errors") return set(value, cfg_.skip_errors);
    if (key == "run.noise_ratio") return set(value, cfg_.noise_ratio);
    if (key == "run.manifest") return set_path(value, cfg_.manifest_path);
    if (key == "run.archive") return set_path(value, cfg_.archive_path);
    if (key == "run.model") return set_path(value, cfg_.model_path);
    if (key == "run.report") return set_path(value, cfg_.report_path);
    if (key == "run.out") return set_path(value, cfg_.out_dir);
    if (key == "run.speakers") return set(value, cfg_.synth_speakers);
    if (key == "run.utterances") return set(value, cfg_.synth_utterances);
    if (key == "run.reps") return set(value, cfg_.synth_reps);

    problems.push_back("unknown config key '" + key + "'");
  }

  std::vector<std::string> problems;

 private:
  void complain(const std::string& value) {
    problems.push_back("cannot parse '" + value + "' for '" + key_ + "'");
  }

  void set(const std::string& value, double& out) {
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) return complain(value);
      out = v;
    } catch (const std::exception&) {
      complain(value);
    }
  }

  template <typename T>
    requires(std::unsigned_integral<T> && !std::same_as<T, bool>)
  void set(const std::string& value, T& out) {
    try {
      if (!value.empty() && value[0] == '-') return complain(value);
      std::size_t used = 0;
      const unsigned long long v = std::stoull(value, &used);
      if (used != value.size()) return complain(value);
      out = static_cast<T>(v);
    } catch (const std::exception&) {
      complain(value);
    }
  }

  void set(const std::string& value, int& out) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(value, &used);
      if (used != value.size()) return complain(value);
      out = v;
    } catch (const std::exception&) {
      complain(value);
    }
  }

  void set(const std::string& value, bool& out) {
    if (value == "true" || value == "1" || value == "on") {
      out = true;
    } else if (value == "false" || value == "0" || value == "off") {
      out = false;
    } else {
      complain(value);
    }
  }

  void set_path(const std::string& value, std::string& out) { out = value; }

  void parse_enum(const std::string& key, const std::string& value,
                  const std::function<void(const std::string&)>& assign) {
    try {
      assign(value);
    } catch (const ConfigError& e) {
      problems.push_back(std::string("'") + key + "': " + e.what());
    }
  }

 public:
  void remember_key(const std::string& key) { key_ = key; }

 private:
  RunConfig& cfg_;
  std::string key_;
};

std::string joined(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

void check_path(std::vector<std::string>& out, const std::string& field,
                const std::string& path) {
  if (path.empty()) return;
  if (!std::filesystem::exists(path))
    out.push_back(field + " points to a missing path '" + path + "'");
}

std::map<std::string, std::string> kv_from_json(const std::string& text,
                                                const std::string& where) {
  std::map<std::string, std::string> kv;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_object())
      throw ParseError(where + ": expected a flat json object");
    for (const auto& [key, value] : j.items()) {
      if (key == "command") continue;
      if (value.is_string())
        kv[key] = value.get<std::string>();
      else
        kv[key] = value.dump();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  return kv;
}

}  // namespace

RunConfig::RunConfig() {
  // Geometry is data-determined; 0 marks "infer at load time".
  model.n_classes = 0;
  model.input_rows = 0;
  model.input_frames = 0;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> out;
  if (workers == 0) out.push_back("run.workers must be at least 1");
  if (noise_ratio < 0.0) out.push_back("run.noise_ratio must not be negative");
  if (synth_speakers < 2) out.push_back("run.speakers must be at least 2");
  if (synth_utterances < 2) out.push_back("run.utterances must be at least 2");
  if (synth_reps < 1) out.push_back("run.reps must be at least 1");
  check_path(out, "run.manifest", manifest_path);
  check_path(out, "run.archive", archive_path);
  check_path(out, "run.model", model_path);
  check_path(out, "run.report", report_path);
  return out;
}

void RunConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) throw ConfigError("invalid run config: " + joined(v));
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> problems;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) +
                         " has no '=': '" + body + "'");
      continue;
    }
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) {
      problems.push_back("line " + std::to_string(line_no) +
                         " has an empty key");
      continue;
    }
    if (kv.count(key)) {
      problems.push_back("duplicate key '" + key + "' at line " +
                         std::to_string(line_no));
      continue;
    }
    kv[key] = value;
  }
  if (!problems.empty())
    throw ParseError("config: " + joined(problems));
  return kv;
}

std::map<std::string, std::string> load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '{') return kv_from_json(text, path);
    break;
  }
  try {
    return parse_config_text(text);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void apply_config(RunConfig& cfg,
                  const std::map<std::string, std::string>& kv) {
  Applier applier(cfg);
  for (const auto& [key, value] : kv) {
    applier.remember_key(key);
    applier.apply(key, value);
  }
  if (!applier.problems.empty())
    throw ConfigError("invalid config: " + joined(applier.problems));
}

void infer_model_geometry(ModelConfig& model, const FeatureArchive& archive) {
  if (archive.features.empty())
    throw DataError("cannot infer model geometry from an empty archive");
  if (model.n_classes == 0)
    model.n_classes = archive.manifest.speakers().size();
  if (model.input_rows == 0) model.input_rows = archive.features[0].rows;
  if (model.input_frames == 0) model.input_frames = archive.features[0].cols;
}

std::string run_config_json(const RunConfig& cfg, const std::string& command) {
  nlohmann::json j;
  j["command"] = command;
  j["feature.frame_ms"] = cfg.feature.frame_ms;
  j["feature.hop_ms"] = cfg.feature.hop_ms;
  j["feature.n_fft"] = cfg.feature.n_fft;
  j["feature.n_mel_filters"] = cfg.feature.n_mel_filters;
  j["feature.n_cepstra"] = cfg.feature.n_cepstra;
  j["feature.fmin_hz"] = cfg.feature.fmin_hz;
  j["feature.fmax_hz"] = cfg.feature.fmax_hz;
  j["feature.target_frames"] = cfg.feature.target_frames;
  j["feature.pre_emphasis"] = cfg.feature.pre_emphasis;
  j["feature.delta_window"] = cfg.feature.delta_window;
  j["model.architecture"] = architecture_name(cfg.model.architecture);
  j["model.n_classes"] = cfg.model.n_classes;
  j["model.input_rows"] = cfg.model.input_rows;
  j["model.input_frames"] = cfg.model.input_frames;
  j["model.routing_iterations"] = cfg.model.routing_iterations;
  j["model.decoder_enabled"] = cfg.model.decoder_enabled;
  j["model.decoder_hidden"] = cfg.model.decoder_hidden;
  j["model.dropout_rate"] = cfg.model.dropout_rate;
  j["model.conv1_kernel_height"] = cfg.model.conv1_kernel_height;
  j["loss.m_plus"] = cfg.model.loss.m_plus;
  j["loss.m_minus"] = cfg.model.loss.m_minus;
  j["loss.lambda"] = cfg.model.loss.lambda;
  j["loss.alpha"] = cfg.model.loss.alpha;
  j["train.batch_size"] = cfg.train.batch_size;
  j["train.learning_rate"] = cfg.train.learning_rate;
  j["train.max_epochs"] = cfg.train.max_epochs;
  j["train.patience"] = cfg.train.patience;
  j["train.trials"] = cfg.train.trials;
  j["run.protocol"] = split_protocol_name(cfg.protocol);
  j["run.scheme"] = trial_scheme_name(cfg.scheme);
  j["run.seed"] = cfg.seed;
  j["run.workers"] = cfg.workers;
  j["run.skip_errors"] = cfg.skip_errors;
  j["run.noise_ratio"] = cfg.noise_ratio;
  j["run.manifest"] = cfg.manifest_path;
  j["run.archive"] = cfg.archive_path;
  j["run.model"] = cfg.model_path;
  j["run.report"] = cfg.report_path;
  j["run.out"] = cfg.out_dir;
  j["run.speakers"] = cfg.synth_speakers;
  j["run.utterances"] = cfg.synth_utterances;
  j["run.reps"] = cfg.synth_reps;
  return j.dump(2) + "\n";
}

void save_run_json(const std::string& path, const RunConfig& cfg,
                   const std::string& command) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << run_config_json(cfg, command);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace capsid
