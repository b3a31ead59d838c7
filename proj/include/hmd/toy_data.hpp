#pragma once

// Synthetic overfit corpus: 10 videos (toy000..toy009), m=5 frames of width
// q=16, one fixed caption each. Frames are a per-video prototype plus small
// noise, so every video is separable from its features alone.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmd/data.hpp"

namespace hmd {

struct ToyCorpusSpec {
  std::size_t videos = 10;
  std::size_t frames = 5;
  std::size_t width = 16;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

const std::vector<std::string>& toy_captions();

struct ToyCorpus {
  std::vector<FeatureFile> features;
  std::vector<ManifestEntry> manifest;  // all in the train split
};

ToyCorpus make_toy_corpus(const ToyCorpusSpec& spec = {});

/// Writes <dir>/features/*.vff, <dir>/manifest.jsonl and <dir>/vocab.tsv.
void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);

}  // namespace hmd
