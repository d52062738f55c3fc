#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsid/audio.hpp"

namespace capsid {

enum class CorpusKind { kRavdess, kSusasWords, kGeneric, kSynthetic };

struct ManifestEntry {
  std::string path;
  std::string speaker_id;
  Emotion emotion = Emotion::kNeutral;
  std::string utterance_id;
  std::uint32_t repetition = 0;
};

struct CorpusManifest {
  CorpusKind kind = CorpusKind::kGeneric;
  std::vector<ManifestEntry> entries;

  // Distinct ids in sorted order.
  std::vector<std::string> speakers() const;
  std::vector<std::string> utterances() const;

  // Enforces unique (speaker, emotion, utterance, repetition) tuples and the
  // minimum of 2 speakers and 2 utterances; throws DataError otherwise.
  void validate() const;
};

enum class SplitProtocol { kEsdStyle, kRavdessStyle, kSusasStyle };

const char* split_protocol_name(SplitProtocol p);
SplitProtocol split_protocol_from_name(const std::string& name);

struct SplitPlan {
  int trial_index = 0;
  std::uint64_t seed = 0;
  SplitProtocol protocol = SplitProtocol::kEsdStyle;
  std::vector<std::size_t> train_items;
  std::vector<std::size_t> test_items;
};

// Text-independent split plans, deterministic in (manifest, protocol, seed):
//  * esd_style: 4 seeded-random utterances train (neutral entries only),
//    every entry of the remaining utterances tests.
//  * ravdess_style: neutral entries of the lexically first utterance train,
//    every entry of the second tests; swap_statements flips the two.
//  * susas_style: neutral entries of 15 seeded-random utterances train,
//    every entry of the rest tests.
// Throws ConfigError when the manifest has too few distinct utterances.
SplitPlan make_split_plan(const CorpusManifest& manifest,
                          SplitProtocol protocol, std::uint64_t seed,
                          int trial_index = 0, bool swap_statements = false);

// JSON round trip: {trial, seed, protocol, train:[...], test:[...]}.
void save_split_plan(const std::string& path, const SplitPlan& plan);
SplitPlan load_split_plan(const std::string& path);

// CSV with header `path,speaker,emotion,utterance,repetition`. Relative
// entry paths are resolved against the manifest's directory on load.
CorpusManifest load_manifest_csv(const std::string& path);
void save_manifest_csv(const std::string& path,
                       const CorpusManifest& manifest);

struct RavdessName {
  std::string speaker_id;
  Emotion emotion = Emotion::kNeutral;
  std::string utterance_id;
  std::uint32_t repetition = 0;
  bool skip = false;  // emotion outside the studied six, or non-audio file
  bool song = false;
};

// Decodes the 7-field hyphenated scheme
// modality-channel-emotion-intensity-statement-repetition-actor. The two
// intensity levels are folded into the repetition index so label tuples stay
// unique. Throws ParseError on malformed names.
RavdessName parse_ravdess_name(const std::string& filename);

// Recursively scans dir for .wav files named in the scheme above. Song
// recordings are skipped unless include_song is set.
CorpusManifest scan_ravdess_directory(const std::string& dir,
                                      bool include_song = false);

struct SyntheticCorpus {
  CorpusManifest manifest;
  std::vector<AudioClip> clips;  // parallel to manifest.entries
};

// Deterministic desk-scale corpus: speakers are distinct formant triples,
// utterances are shared pitch-contour patterns, the six studied emotions
// perturb pitch and amplitude envelope, repetitions add small jitter.
// Clips are 1.28-1.6 s at 16 kHz.
SyntheticCorpus generate_synthetic_corpus(std::size_t n_speakers,
                                          std::size_t n_utterances,
                                          std::size_t n_reps,
                                          std::uint64_t seed);

}  // namespace capsid
