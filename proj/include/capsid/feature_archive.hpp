#pragma once

#include <string>
#include <vector>

#include "capsid/corpus.hpp"
#include "capsid/dsp.hpp"

namespace capsid {

struct FeatureArchive {
  std::vector<FeatureMatrix> features;
  CorpusManifest manifest;  // entry i labels features[i]
};

// Labels travel in a CSV next to the binary archive.
std::string archive_sidecar_path(const std::string& archive_path);

// One record per clip: little-endian {magic "CAPF", version, rows, cols,
// n_valid} (u32 each) followed by row-major 32-bit floats, concatenated.
// The sidecar CSV maps record index to the manifest labels.
void save_feature_archive(const std::string& path,
                          const std::vector<FeatureMatrix>& features,
                          const CorpusManifest& manifest);

FeatureArchive load_feature_archive(const std::string& path);

}  // namespace capsid
