#include "capsid/feature_archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "capsid/errors.hpp"

namespace capsid {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'P', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::ifstream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) |
      (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) |
      (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void put_f32(std::ofstream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(os, bits);
}

}  // namespace

std::string archive_sidecar_path(const std::string& archive_path) {
  return archive_path + ".csv";
}

void save_feature_archive(const std::string& path,
                          const std::vector<FeatureMatrix>& features,
                          const CorpusManifest& manifest) {
  if (features.size() != manifest.entries.size()) {
    throw ContractError("archive has " + std::to_string(features.size()) +
                        " feature maps but " +
                        std::to_string(manifest.entries.size()) + " labels");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (const FeatureMatrix& f : features) {
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(f.rows));
    put_u32(os, static_cast<std::uint32_t>(f.cols));
    put_u32(os, static_cast<std::uint32_t>(f.n_valid_frames));
    for (double v : f.values) put_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write to '" + path + "' failed");
  os.close();

  std::ofstream csv(archive_sidecar_path(path), std::ios::binary);
  if (!csv) {
    throw IoError("cannot open '" + archive_sidecar_path(path) +
                  "' for writing");
  }
  csv << "index,path,speaker,emotion,utterance,repetition\n";
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    csv << i << "," << e.path << "," << e.speaker_id << ","
        << emotion_name(e.emotion) << "," << e.utterance_id << ","
        << e.repetition << "\n";
  }
  if (!csv) throw IoError("write to '" + archive_sidecar_path(path) +
                          "' failed");
}

FeatureArchive load_feature_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");

  FeatureArchive archive;
  archive.manifest.kind = CorpusKind::kGeneric;
  for (;;) {
    char magic[4];
    if (!is.read(magic, 4)) break;  // clean EOF between records
    if (std::memcmp(magic, kMagic, 4) != 0) {
      throw ParseError("'" + path + "' record " +
                       std::to_string(archive.features.size()) +
                       " has a bad magic");
    }
    std::uint32_t version = 0, rows = 0, cols = 0, n_valid = 0;
    if (!get_u32(is, version) || !get_u32(is, rows) || !get_u32(is, cols) ||
        !get_u32(is, n_valid)) {
      throw ParseError("'" + path + "' record " +
                       std::to_string(archive.features.size()) +
                       " has a truncated header");
    }
    if (version != kVersion) {
      throw ParseError("'" + path + "' record " +
                       std::to_string(archive.features.size()) +
                       " has unsupported version " + std::to_string(version));
    }
    if (rows == 0 || cols == 0 || n_valid > cols ||
        rows > (1u << 20) || cols > (1u << 20)) {
      throw ParseError("'" + path + "' record " +
                       std::to_string(archive.features.size()) +
                       " has an implausible shape");
    }
    FeatureMatrix f;
    f.rows = rows;
    f.cols = cols;
    f.n_valid_frames = n_valid;
    f.values.resize(static_cast<std::size_t>(rows) * cols);
    for (double& v : f.values) {
      std::uint32_t bits = 0;
      if (!get_u32(is, bits)) {
        throw ParseError("'" + path + "' record " +
                         std::to_string(archive.features.size()) +
                         " has truncated payload");
      }
      float fv;
      std::memcpy(&fv, &bits, 4);
      v = fv;
    }
    archive.features.push_back(std::move(f));
  }

  const std::string sidecar = archive_sidecar_path(path);
  std::ifstream csv(sidecar, std::ios::binary);
  if (!csv) throw IoError("cannot open label sidecar '" + sidecar + "'");
  std::string line;
  if (!std::getline(csv, line)) {
    throw ParseError("label sidecar '" + sidecar + "' is empty");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,path,speaker,emotion,utterance,repetition") {
    throw ParseError("label sidecar '" + sidecar + "' has header '" + line +
                     "'");
  }
  std::size_t expected = 0;
  while (std::getline(csv, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    f.push_back(cur);
    if (f.size() != 6) {
      throw ParseError("label sidecar '" + sidecar + "' row has " +
                       std::to_string(f.size()) + " fields, expected 6");
    }
    if (f[0] != std::to_string(expected)) {
      throw ParseError("label sidecar '" + sidecar +
                       "' indices are not consecutive from 0");
    }
    ++expected;
    ManifestEntry e;
    e.path = f[1];
    e.speaker_id = f[2];
    e.emotion = emotion_from_name(f[3]);
    e.utterance_id = f[4];
    e.repetition = static_cast<std::uint32_t>(std::stoul(f[5]));
    archive.manifest.entries.push_back(std::move(e));
  }
  if (archive.manifest.entries.size() != archive.features.size()) {
    throw ParseError("'" + path + "' holds " +
                     std::to_string(archive.features.size()) +
                     " records but the sidecar lists " +
                     std::to_string(archive.manifest.entries.size()));
  }
  return archive;
}

}  // namespace capsid
