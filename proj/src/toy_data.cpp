#include "hmd/toy_data.hpp"

#include <cstdio>
#include <random>
#include <stdexcept>

#include "hmd/hashing.hpp"

namespace hmd {

const std::vector<std::string>& toy_captions() {
  static const std::vector<std::string> captions = {
      "a man plays the guitar", "a woman is cooking food", "the dog runs in the park", "a cat is sleeping",
      "the man is cooking",     "a woman plays the piano", "a dog is sleeping",        "the cat runs fast",
      "the boy rides bikes",    "a girl is singing",
  };
  return captions;
}

ToyCorpus make_toy_corpus(const ToyCorpusSpec& spec) {
  const auto& captions = toy_captions();
  if (spec.videos == 0 || spec.videos > captions.size()) {
    throw std::invalid_argument("toy corpus supports 1.." + std::to_string(captions.size()) + " videos");
  }
  if (spec.frames == 0 || spec.width == 0) throw std::invalid_argument("toy corpus needs m, q > 0");
  std::mt19937_64 rng(derive_seed(spec.seed, fnv1a64("toy-corpus")));
  std::normal_distribution<double> normal(0.0, 1.0);

  ToyCorpus out;
  for (std::size_t v = 0; v < spec.videos; ++v) {
    char id[16];
    std::snprintf(id, sizeof id, "toy%03zu", v);
    std::vector<double> prototype(spec.width);
    for (auto& p : prototype) p = normal(rng);
    FeatureFile f;
    f.video_id = id;
    f.m = spec.frames;
    f.q = spec.width;
    for (std::size_t i = 0; i < spec.frames; ++i) {
      for (std::size_t k = 0; k < spec.width; ++k) {
        f.values.push_back(static_cast<float>(prototype[k] + spec.noise * normal(rng)));
      }
    }
    out.features.push_back(std::move(f));
    out.manifest.push_back({id, "train", {captions[v]}});
  }
  return out;
}

void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir) {
  const auto features = dir / "features";
  std::filesystem::create_directories(features);
  std::vector<std::string> all;
  for (const auto& f : corpus.features) write_feature_file(f, feature_path(features, f.video_id));
  for (const auto& e : corpus.manifest) all.insert(all.end(), e.captions.begin(), e.captions.end());
  write_manifest(corpus.manifest, dir / "manifest.jsonl");
  write_vocab(build_vocab(all, 1), dir / "vocab.tsv");
}

}  // namespace hmd
