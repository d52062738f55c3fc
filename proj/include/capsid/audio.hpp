#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace capsid {

enum class Emotion {
  kNeutral,
  kHappy,
  kSad,
  kAngry,
  kFear,
  kDisgust,
  kLoud,
  kSoft,
  kSlow,
  kFast,
  kCalm,
  kSurprise,
};

// Lower-case canonical name, e.g. "neutral".
const char* emotion_name(Emotion e);
// Throws ParseError for unknown names.
Emotion emotion_from_name(const std::string& name);

struct AudioClip {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  std::uint32_t sample_rate_hz = 0;
  std::string speaker_id;
  Emotion emotion = Emotion::kNeutral;
  std::string utterance_id;
  std::uint32_t repetition = 0;
};

}  // namespace capsid
