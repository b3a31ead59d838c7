#pragma once

// Corpus BLEU-4 and CIDEr over whitespace-tokenized captions. references[i]
// holds the references of the video whose candidate is candidates[i].

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace hmd {

struct BleuResult {
  double score = 0.0;  // 0..100
  double brevity_penalty = 0.0;
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> totals{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

/// Unsmoothed corpus BLEU with uniform 1..4-gram weights. Reference counts
/// clip per video; the brevity penalty uses the closest reference length
/// (shorter on ties). Any zero precision gives 0.
BleuResult bleu4(const std::vector<std::string>& candidates,
                 const std::vector<std::vector<std::string>>& references);

/// Single-sentence BLEU with add-one smoothing on 3- and 4-gram precisions.
/// Meant for display next to individual captions, never for reporting.
double sentence_bleu_smoothed(const std::string& candidate, const std::vector<std::string>& references);

struct CiderResult {
  double score = 0.0;
  std::vector<double> per_video;
};

/// TF-IDF n-gram cosine (n = 1..4), averaged over references and n, ×10,
/// then averaged over videos. idf = log(N / max(1, df)) with N videos and
/// df the number of videos whose references contain the n-gram.
CiderResult cider(const std::vector<std::string>& candidates,
                  const std::vector<std::vector<std::string>>& references);

}  // namespace hmd
