#pragma once

#include <string>

#include "capsid/audio.hpp"

namespace capsid {

// Reads a RIFF/WAVE file holding 16-bit PCM or 32-bit IEEE float samples,
// mono or stereo (stereo is channel-averaged). 16-bit samples are divided
// by 32768; float samples are clamped to [-1, 1]. Labels are left unset.
// Malformed containers raise ParseError naming the offending chunk;
// unsupported encodings raise UnsupportedFormatError.
AudioClip load_wav(const std::string& path);

// Writes mono 16-bit PCM; samples are clamped to [-1, 1] and rounded.
void save_wav(const std::string& path, const AudioClip& clip);

}  // namespace capsid
