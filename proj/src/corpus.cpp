#include "capsid/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>

#include "capsid/errors.hpp"
#include "capsid/log.hpp"
#include "capsid/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace capsid {

namespace {

constexpr std::array<const char*, 12> kEmotionNames = {
    "neutral", "happy", "sad",  "angry", "fear", "disgust",
    "loud",    "soft",  "slow", "fast",  "calm", "surprise"};

}  // namespace

const char* emotion_name(Emotion e) {
  auto idx = static_cast<std::size_t>(e);
  if (idx >= kEmotionNames.size()) {
    throw ContractError("emotion enum value out of range");
  }
  return kEmotionNames[idx];
}

Emotion emotion_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (name == kEmotionNames[i]) return static_cast<Emotion>(i);
  }
  throw ParseError("unknown emotion name '" + name + "'");
}

const char* split_protocol_name(SplitProtocol p) {
  switch (p) {
    case SplitProtocol::kEsdStyle:
      return "esd_style";
    case SplitProtocol::kRavdessStyle:
      return "ravdess_style";
    case SplitProtocol::kSusasStyle:
      return "susas_style";
  }
  throw ContractError("split protocol enum value out of range");
}

SplitProtocol split_protocol_from_name(const std::string& name) {
  if (name == "esd_style") return SplitProtocol::kEsdStyle;
  if (name == "ravdess_style") return SplitProtocol::kRavdessStyle;
  if (name == "susas_style") return SplitProtocol::kSusasStyle;
  throw ParseError("unknown split protocol '" + name + "'");
}

namespace {

std::vector<std::string> sorted_distinct(
    const std::vector<ManifestEntry>& entries,
    const std::string ManifestEntry::* field) {
  std::set<std::string> seen;
  for (const auto& e : entries) seen.insert(e.*field);
  return {seen.begin(), seen.end()};
}

}  // namespace

std::vector<std::string> CorpusManifest::speakers() const {
  return sorted_distinct(entries, &ManifestEntry::speaker_id);
}

std::vector<std::string> CorpusManifest::utterances() const {
  return sorted_distinct(entries, &ManifestEntry::utterance_id);
}

void CorpusManifest::validate() const {
  std::set<std::string> tuples;
  for (const auto& e : entries) {
    std::string key = e.speaker_id + "\x1f" + emotion_name(e.emotion) +
                      "\x1f" + e.utterance_id + "\x1f" +
                      std::to_string(e.repetition);
    if (!tuples.insert(key).second) {
      throw DataError("duplicate (speaker, emotion, utterance, repetition) "
                      "tuple: (" +
                      e.speaker_id + ", " + emotion_name(e.emotion) + ", " +
                      e.utterance_id + ", " + std::to_string(e.repetition) +
                      ")");
    }
  }
  if (speakers().size() < 2) {
    throw DataError("manifest needs at least 2 distinct speakers, found " +
                    std::to_string(speakers().size()));
  }
  if (utterances().size() < 2) {
    throw DataError("manifest needs at least 2 distinct utterances, found " +
                    std::to_string(utterances().size()));
  }
}

SplitPlan make_split_plan(const CorpusManifest& manifest,
                          SplitProtocol protocol, std::uint64_t seed,
                          int trial_index, bool swap_statements) {
  const std::vector<std::string> utts = manifest.utterances();

  std::size_t n_train_utts = 0;
  switch (protocol) {
    case SplitProtocol::kEsdStyle:
      n_train_utts = 4;
      break;
    case SplitProtocol::kRavdessStyle:
      n_train_utts = 1;
      break;
    case SplitProtocol::kSusasStyle:
      n_train_utts = 15;
      break;
  }
  if (protocol == SplitProtocol::kRavdessStyle) {
    if (utts.size() != 2) {
      throw ConfigError(
          "ravdess_style split needs exactly 2 distinct utterances, found " +
          std::to_string(utts.size()));
    }
  } else if (utts.size() <= n_train_utts) {
    throw ConfigError(std::string(split_protocol_name(protocol)) +
                      " split needs at least " +
                      std::to_string(n_train_utts + 1) +
                      " distinct utterances, found " +
                      std::to_string(utts.size()));
  }

  std::unordered_set<std::string> train_utts;
  if (protocol == SplitProtocol::kRavdessStyle) {
    train_utts.insert(swap_statements ? utts[1] : utts[0]);
  } else {
    std::vector<std::string> pool = utts;
    Rng rng(sub_seed(seed, "split"));
    rng.shuffle(pool);
    train_utts.insert(pool.begin(), pool.begin() + n_train_utts);
  }

  SplitPlan plan;
  plan.trial_index = trial_index;
  plan.seed = seed;
  plan.protocol = protocol;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (train_utts.count(e.utterance_id)) {
      if (e.emotion == Emotion::kNeutral) plan.train_items.push_back(i);
    } else {
      plan.test_items.push_back(i);
    }
  }
  return plan;
}

void save_split_plan(const std::string& path, const SplitPlan& plan) {
  nlohmann::json j;
  j["trial"] = plan.trial_index;
  j["seed"] = plan.seed;
  j["protocol"] = split_protocol_name(plan.protocol);
  j["train"] = plan.train_items;
  j["test"] = plan.test_items;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing '" + path + "'");
}

SplitPlan load_split_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid split plan JSON in '" + path + "': " + e.what());
  }
  SplitPlan plan;
  try {
    plan.trial_index = j.at("trial").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.protocol = split_protocol_from_name(j.at("protocol").get<std::string>());
    plan.train_items = j.at("train").get<std::vector<std::size_t>>();
    plan.test_items = j.at("test").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("split plan '" + path + "' is missing fields: " +
                     e.what());
  }
  return plan;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

constexpr const char* kManifestHeader =
    "path,speaker,emotion,utterance,repetition";

}  // namespace

CorpusManifest load_manifest_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const fs::path base = fs::path(path).parent_path();

  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("manifest '" + path + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw ParseError("manifest '" + path + "' has header '" + line +
                     "', expected '" + kManifestHeader + "'");
  }

  CorpusManifest manifest;
  manifest.kind = CorpusKind::kGeneric;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 5) {
      throw ParseError("manifest '" + path + "' line " +
                       std::to_string(line_no) + " has " +
                       std::to_string(f.size()) + " fields, expected 5");
    }
    ManifestEntry e;
    fs::path p(f[0]);
    e.path = p.is_absolute() ? p.string() : (base / p).string();
    e.speaker_id = f[1];
    e.emotion = emotion_from_name(f[2]);
    e.utterance_id = f[3];
    try {
      std::size_t pos = 0;
      long long rep = std::stoll(f[4], &pos);
      if (pos != f[4].size() || rep < 0) throw std::invalid_argument("");
      e.repetition = static_cast<std::uint32_t>(rep);
    } catch (const std::exception&) {
      throw ParseError("manifest '" + path + "' line " +
                       std::to_string(line_no) +
                       ": repetition '" + f[4] +
                       "' is not a non-negative integer");
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

void save_manifest_csv(const std::string& path,
                       const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << kManifestHeader << "\n";
  for (const auto& e : manifest.entries) {
    out << e.path << "," << e.speaker_id << "," << emotion_name(e.emotion)
        << "," << e.utterance_id << "," << e.repetition << "\n";
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

namespace {

bool two_digits(const std::string& s) {
  return s.size() == 2 && std::isdigit(static_cast<unsigned char>(s[0])) &&
         std::isdigit(static_cast<unsigned char>(s[1]));
}

}  // namespace

RavdessName parse_ravdess_name(const std::string& filename) {
  std::string stem = fs::path(filename).filename().string();
  if (auto dot = stem.rfind('.'); dot != std::string::npos) {
    stem = stem.substr(0, dot);
  }
  std::vector<std::string> f;
  {
    std::string cur;
    for (char c : stem) {
      if (c == '-') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    f.push_back(cur);
  }
  if (f.size() != 7) {
    throw ParseError("'" + filename + "' has " + std::to_string(f.size()) +
                     " hyphen-separated fields, expected 7");
  }
  for (const auto& field : f) {
    if (!two_digits(field)) {
      throw ParseError("'" + filename + "' has non-2-digit field '" + field +
                       "'");
    }
  }

  // Field order: modality, channel, emotion, intensity, statement,
  // repetition, actor.
  RavdessName name;
  name.song = (f[1] == "02");
  name.speaker_id = f[6];
  name.utterance_id = f[4];

  if (f[0] != "03") name.skip = true;  // keep audio-only recordings

  static const struct {
    const char* code;
    Emotion emotion;
    bool skip;
  } kCodes[] = {
      {"01", Emotion::kNeutral, false}, {"02", Emotion::kCalm, true},
      {"03", Emotion::kHappy, false},   {"04", Emotion::kSad, false},
      {"05", Emotion::kAngry, false},   {"06", Emotion::kFear, false},
      {"07", Emotion::kDisgust, false}, {"08", Emotion::kSurprise, true},
  };
  bool matched = false;
  for (const auto& c : kCodes) {
    if (f[2] == c.code) {
      name.emotion = c.emotion;
      name.skip = name.skip || c.skip;
      matched = true;
      break;
    }
  }
  if (!matched) {
    throw ParseError("'" + filename + "' has unknown emotion code '" + f[2] +
                     "'");
  }

  const std::uint32_t intensity = static_cast<std::uint32_t>(
      std::stoul(f[3]));
  const std::uint32_t rep = static_cast<std::uint32_t>(std::stoul(f[5]));
  if (intensity < 1 || rep < 1) {
    throw ParseError("'" + filename +
                     "' has zero intensity or repetition field");
  }
  // The corpus records each statement at two intensities; fold intensity
  // into the repetition index so label tuples stay unique.
  name.repetition = (intensity - 1) * 2 + rep;
  return name;
}

CorpusManifest scan_ravdess_directory(const std::string& dir,
                                      bool include_song) {
  if (!fs::is_directory(dir)) {
    throw IoError("'" + dir + "' is not a directory");
  }
  std::vector<fs::path> paths;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());

  CorpusManifest manifest;
  manifest.kind = CorpusKind::kRavdess;
  for (const auto& p : paths) {
    RavdessName name;
    try {
      name = parse_ravdess_name(p.filename().string());
    } catch (const ParseError&) {
      logging::debug("skipping '" + p.string() + "': not a corpus filename");
      continue;
    }
    if (name.skip) continue;
    if (name.song && !include_song) continue;
    ManifestEntry e;
    e.path = p.string();
    e.speaker_id = name.speaker_id;
    e.emotion = name.emotion;
    e.utterance_id = name.utterance_id;
    // Song renditions of a statement reuse the speech tuple coordinates, so
    // shift them past the 4 speech repetitions when both are kept.
    e.repetition = name.repetition + (name.song ? 4u : 0u);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

namespace {

constexpr std::uint32_t kSynthRate = 16000;

struct SpeakerVoice {
  double f0_hz;
  double formants[3];
  double tilt;  // one-pole lowpass coefficient, voice brightness
};

struct UtterancePattern {
  std::vector<double> syllable_pitch;  // relative multiplier per syllable
  double sweep;                        // total pitch drift across the clip
  double duration_s;
};

struct EmotionStyle {
  double pitch_scale;
  double env_slope;      // amplitude ramp over the clip, +rising / -falling
  double attack_s;       // envelope attack time
  double tremolo_hz;     // pitch vibrato rate, 0 = none
  double tremolo_depth;
  double am_hz;          // slow amplitude modulation rate, 0 = none
  double am_depth;
};

EmotionStyle style_for(Emotion e) {
  switch (e) {
    case Emotion::kNeutral:
      return {1.00, 0.0, 0.050, 0.0, 0.0, 0.0, 0.0};
    case Emotion::kHappy:
      return {1.15, 0.4, 0.040, 0.0, 0.0, 0.0, 0.0};
    case Emotion::kSad:
      return {0.85, -0.4, 0.120, 0.0, 0.0, 0.0, 0.0};
    case Emotion::kAngry:
      return {1.25, 0.1, 0.008, 0.0, 0.0, 0.0, 0.0};
    case Emotion::kFear:
      return {1.10, 0.0, 0.050, 5.5, 0.04, 0.0, 0.0};
    case Emotion::kDisgust:
      return {0.90, 0.0, 0.080, 0.0, 0.0, 2.0, 0.35};
    default:
      throw ContractError("synthetic corpus covers only the six studied "
                          "emotions");
  }
}

// Two-pole resonator centered at f_hz. Output scale is irrelevant because
// the clip is peak-normalized afterwards.
struct Resonator {
  double a1, a2, y1 = 0.0, y2 = 0.0;
  Resonator(double f_hz, double bw_hz, double rate) {
    double r = std::exp(-3.14159265358979323846 * bw_hz / rate);
    a1 = 2.0 * r * std::cos(2.0 * 3.14159265358979323846 * f_hz / rate);
    a2 = -r * r;
  }
  double step(double x) {
    double y = x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

std::vector<std::size_t> spread_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> slots(n);
  for (std::size_t i = 0; i < n; ++i) slots[i] = i;
  rng.shuffle(slots);
  return slots;
}

std::string index_id(char prefix, std::size_t i) {
  std::ostringstream os;
  os << prefix;
  if (i < 10) os << '0';
  os << i;
  return os.str();
}

std::vector<double> render_clip(const SpeakerVoice& voice,
                                const UtterancePattern& pattern,
                                const EmotionStyle& style,
                                std::uint64_t jitter_seed) {
  Rng jitter(jitter_seed);
  const double pitch_jitter = jitter.uniform(0.98, 1.02);
  const double amp_jitter = jitter.uniform(0.9, 1.0);
  const double phase0 = jitter.next_double();

  const std::size_t n = static_cast<std::size_t>(
      std::lround(pattern.duration_s * kSynthRate));
  const std::size_t n_syll = pattern.syllable_pitch.size();
  const double syll_len = pattern.duration_s / static_cast<double>(n_syll);

  Resonator r1(voice.formants[0], 60.0 + 0.04 * voice.formants[0], kSynthRate);
  Resonator r2(voice.formants[1], 60.0 + 0.04 * voice.formants[1], kSynthRate);
  Resonator r3(voice.formants[2], 60.0 + 0.04 * voice.formants[2], kSynthRate);

  std::vector<double> samples(n);
  double phase = phase0;
  double lowpassed = 0.0;
  const double total_s = pattern.duration_s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSynthRate;
    const auto syll = std::min<std::size_t>(
        static_cast<std::size_t>(t / syll_len), n_syll - 1);
    const double t_in_syll = t - static_cast<double>(syll) * syll_len;

    double f0 = voice.f0_hz * style.pitch_scale * pitch_jitter *
                pattern.syllable_pitch[syll] *
                (1.0 + pattern.sweep * (t / total_s - 0.5));
    if (style.tremolo_hz > 0.0) {
      f0 *= 1.0 + style.tremolo_depth *
                      std::sin(2.0 * 3.14159265358979323846 *
                               style.tremolo_hz * t);
    }

    phase += f0 / kSynthRate;
    phase -= std::floor(phase);
    const double saw = 2.0 * phase - 1.0;

    const double excited =
        r1.step(saw) + 0.7 * r2.step(saw) + 0.4 * r3.step(saw);
    lowpassed = voice.tilt * lowpassed + (1.0 - voice.tilt) * excited;

    double env = 1.0 + style.env_slope * (t / total_s - 0.5);
    env *= std::min(1.0, t_in_syll / style.attack_s);
    const double release = syll_len - t_in_syll;
    env *= std::min(1.0, release / 0.015);
    if (style.am_hz > 0.0) {
      env *= 1.0 - style.am_depth *
                       (0.5 + 0.5 * std::sin(2.0 * 3.14159265358979323846 *
                                             style.am_hz * t));
    }
    samples[i] = lowpassed * env;
  }

  double peak = 0.0;
  for (double s : samples) peak = std::max(peak, std::abs(s));
  const double gain = peak > 0.0 ? 0.8 * amp_jitter / peak : 0.0;
  for (double& s : samples) s *= gain;
  return samples;
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(std::size_t n_speakers,
                                          std::size_t n_utterances,
                                          std::size_t n_reps,
                                          std::uint64_t seed) {
  if (n_speakers < 2 || n_utterances < 2 || n_reps < 1) {
    throw ConfigError("synthetic corpus needs at least 2 speakers, "
                      "2 utterances and 1 repetition");
  }
  if (n_speakers > 99 || n_utterances > 99) {
    throw ConfigError("synthetic corpus ids support at most 99 speakers "
                      "and 99 utterances");
  }

  // Speakers sit in evenly spaced slots of each voice-parameter range, with
  // independently shuffled slot orders so the parameters decorrelate.
  Rng voice_rng(sub_seed(seed, "voices"));
  const auto f0_slots = spread_permutation(n_speakers, voice_rng);
  const auto f1_slots = spread_permutation(n_speakers, voice_rng);
  const auto f2_slots = spread_permutation(n_speakers, voice_rng);
  const auto f3_slots = spread_permutation(n_speakers, voice_rng);
  const auto tilt_slots = spread_permutation(n_speakers, voice_rng);
  const double denom = static_cast<double>(n_speakers - 1);

  std::vector<SpeakerVoice> voices(n_speakers);
  for (std::size_t s = 0; s < n_speakers; ++s) {
    auto lerp = [&](std::size_t slot, double lo, double hi) {
      return lo + (hi - lo) * static_cast<double>(slot) / denom;
    };
    voices[s].f0_hz = lerp(f0_slots[s], 95.0, 220.0);
    voices[s].formants[0] = lerp(f1_slots[s], 320.0, 640.0);
    voices[s].formants[1] = lerp(f2_slots[s], 1000.0, 1800.0);
    voices[s].formants[2] = lerp(f3_slots[s], 2400.0, 3200.0);
    voices[s].tilt = lerp(tilt_slots[s], 0.0, 0.6);
  }

  std::vector<UtterancePattern> patterns(n_utterances);
  for (std::size_t u = 0; u < n_utterances; ++u) {
    Rng rng(sub_seed(seed, "utterance", u));
    UtterancePattern& p = patterns[u];
    const std::size_t n_syll = 2 + rng.next_below(3);
    p.syllable_pitch.resize(n_syll);
    for (double& m : p.syllable_pitch) m = rng.uniform(0.85, 1.25);
    p.sweep = rng.uniform(-0.25, 0.25);
    p.duration_s = rng.uniform(1.28, 1.60);
  }

  static const Emotion kStudied[] = {Emotion::kNeutral, Emotion::kHappy,
                                     Emotion::kSad,     Emotion::kAngry,
                                     Emotion::kFear,    Emotion::kDisgust};

  SyntheticCorpus corpus;
  corpus.manifest.kind = CorpusKind::kSynthetic;
  std::uint64_t clip_index = 0;
  for (std::size_t s = 0; s < n_speakers; ++s) {
    const std::string speaker_id = index_id('s', s);
    for (std::size_t u = 0; u < n_utterances; ++u) {
      const std::string utterance_id = index_id('u', u);
      for (std::size_t r = 1; r <= n_reps; ++r) {
        for (Emotion emotion : kStudied) {
          AudioClip clip;
          clip.sample_rate_hz = kSynthRate;
          clip.speaker_id = speaker_id;
          clip.emotion = emotion;
          clip.utterance_id = utterance_id;
          clip.repetition = static_cast<std::uint32_t>(r);
          clip.samples = render_clip(voices[s], patterns[u],
                                     style_for(emotion),
                                     sub_seed(seed, "take", clip_index));
          ++clip_index;

          ManifestEntry e;
          std::ostringstream os;
          os << speaker_id << "_" << utterance_id << "_r";
          if (r < 10) os << '0';
          os << r << "_" << emotion_name(emotion) << ".wav";
          e.path = os.str();
          e.speaker_id = speaker_id;
          e.emotion = emotion;
          e.utterance_id = utterance_id;
          e.repetition = clip.repetition;
          corpus.manifest.entries.push_back(std::move(e));
          corpus.clips.push_back(std::move(clip));
        }
      }
    }
  }
  return corpus;
}

}  // namespace capsid
