#include "capsid/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "capsid/errors.hpp"

namespace capsid {

namespace {

std::uint32_t u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t u16_le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8 & 0xff));
  out.push_back(static_cast<char>(v >> 16 & 0xff));
  out.push_back(static_cast<char>(v >> 24 & 0xff));
}

void put_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8 & 0xff));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  std::string raw((std::istreambuf_iterator<char>(is)),
                  std::istreambuf_iterator<char>());
  const auto* data = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t n = raw.size();

  if (n < 12 || std::memcmp(data, "RIFF", 4) != 0)
    throw ParseError("'" + path + "': missing RIFF chunk");
  if (std::memcmp(data + 8, "WAVE", 4) != 0)
    throw ParseError("'" + path + "': RIFF form type is not WAVE");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    char id[5] = {0};
    std::memcpy(id, data + off, 4);
    const std::uint32_t chunk_len = u32_le(data + off + 4);
    const std::size_t body = off + 8;
    if (body + chunk_len > n)
      throw ParseError("'" + path + "': truncated '" + id + "' chunk");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16)
        throw ParseError("'" + path + "': short 'fmt ' chunk");
      format = u16_le(data + body);
      channels = u16_le(data + body + 2);
      rate = u32_le(data + body + 4);
      bits = u16_le(data + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      pcm = data + body;
      pcm_len = chunk_len;
    }
    off = body + chunk_len + (chunk_len & 1);
  }

  if (!have_fmt) throw ParseError("'" + path + "': missing 'fmt ' chunk");
  if (pcm == nullptr) throw ParseError("'" + path + "': missing 'data' chunk");
  if (rate == 0) throw ParseError("'" + path + "': zero sample rate in 'fmt '");
  if (channels == 0 || channels > 2)
    throw UnsupportedFormatError("'" + path + "': " +
                                 std::to_string(channels) +
                                 " channels (mono or stereo only)");
  if (!(format == kFormatPcm && bits == 16) &&
      !(format == kFormatFloat && bits == 32))
    throw UnsupportedFormatError(
        "'" + path + "': format tag " + std::to_string(format) + " at " +
        std::to_string(bits) + " bits (PCM16 or float32 only)");

  const std::size_t bytes_per = bits / 8;
  const std::size_t frame_bytes = bytes_per * channels;
  if (pcm_len % frame_bytes != 0)
    throw ParseError("'" + path + "': 'data' chunk is not frame aligned");
  const std::size_t frames = pcm_len / frame_bytes;
  if (frames == 0) throw ParseError("'" + path + "': empty 'data' chunk");

  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::uint16_t ch = 0; ch < channels; ++ch) {
      const unsigned char* p = pcm + (f * channels + ch) * bytes_per;
      if (format == kFormatPcm) {
        const auto v = static_cast<std::int16_t>(u16_le(p));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        std::uint32_t u = u32_le(p);
        float fv;
        std::memcpy(&fv, &u, 4);
        double d = static_cast<double>(fv);
        if (d > 1.0) d = 1.0;
        if (d < -1.0) d = -1.0;
        acc += d;
      }
    }
    clip.samples[f] = acc / static_cast<double>(channels);
  }
  return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
  if (clip.samples.empty()) throw ContractError("refusing to write empty wav");
  if (clip.sample_rate_hz == 0)
    throw ContractError("refusing to write wav with zero sample rate");
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32_le(out, 36 + 2 * n);
  out += "WAVE";
  out += "fmt ";
  put_u32_le(out, 16);
  put_u16_le(out, kFormatPcm);
  put_u16_le(out, 1);
  put_u32_le(out, clip.sample_rate_hz);
  put_u32_le(out, clip.sample_rate_hz * 2);
  put_u16_le(out, 2);
  put_u16_le(out, 16);
  out += "data";
  put_u32_le(out, 2 * n);
  for (double s : clip.samples) {
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    const auto v = static_cast<std::int16_t>(std::lround(s * 32767.0));
    put_u16_le(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("write to '" + path + "' failed");
}

}  // namespace capsid
