#pragma once

// Feature files, caption manifests, vocabulary and batching.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hmd/tensor.hpp"

namespace hmd {

// ---------------------------------------------------------------------------
// Feature files: "VFF1", u32 version (1), u32 id length, id bytes, u32 m,
// u32 q, m·q float32; little-endian throughout.

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
/// Hard cap on m·q so a corrupt header cannot trigger a huge allocation.
inline constexpr std::uint64_t kMaxFeatureElements = std::uint64_t{1} << 31;

enum class FeatureError { bad_magic, bad_version, truncated, overflow, invalid_header, io };

class feature_format_error : public std::runtime_error {
 public:
  feature_format_error(FeatureError kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FeatureError kind() const { return kind_; }

 private:
  FeatureError kind_;
};

struct FeatureFile {
  std::string video_id;
  std::size_t m = 0;
  std::size_t q = 0;
  std::vector<float> values;  // m·q row-major

  /// m×q tensor of doubles.
  Tensor to_tensor() const;
};

std::size_t feature_file_size(std::size_t id_length, std::size_t m, std::size_t q);

void write_feature_file(const FeatureFile& file, const std::filesystem::path& path);
FeatureFile read_feature_file(const std::filesystem::path& path);

/// <dir>/<video_id>.vff
std::filesystem::path feature_path(const std::filesystem::path& dir, std::string_view video_id);

// ---------------------------------------------------------------------------
// Manifest: one JSON object per line, {"video_id", "split", "captions"}.

struct ManifestEntry {
  std::string video_id;
  std::string split;
  std::vector<std::string> captions;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Tokens and vocabulary

/// Strips ASCII punctuation, lowercases, splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);
/// Tokens joined by single spaces.
std::string normalize_text(std::string_view text);

class Vocabulary {
 public:
  /// Reserved tokens only.
  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::size_t count(std::size_t index) const { return counts_.at(index); }
  /// UNK for unknown tokens.
  std::size_t index_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::size_t>& counts() const { return counts_; }

  /// Appends a new token; rejects duplicates.
  void add(const std::string& token, std::size_t count);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::size_t> counts_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Keeps tokens seen at least `min_count` times, ordered by count
/// (descending) then first occurrence.
Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count);

void write_vocab(const Vocabulary& vocab, const std::filesystem::path& path);
Vocabulary read_vocab(const std::filesystem::path& path);

struct CaptionSequence {
  std::string video_id;
  std::vector<std::size_t> tokens;  // BOS … EOS
  std::string text;
};

CaptionSequence encode_caption(std::string_view text, const Vocabulary& vocab, std::string video_id = {});
/// Drops PAD/BOS, stops at EOS, joins with single spaces.
std::string decode_tokens(const std::vector<std::size_t>& indices, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Datasets and batches

struct TrainItem {
  std::string video_id;
  Tensor frames;                    // m×q
  std::vector<std::size_t> tokens;  // BOS … EOS
};

struct EvalVideo {
  std::string video_id;
  Tensor frames;
  std::vector<std::string> references;  // normalized text
};

/// Every manifest entry in `split`, in manifest order.
std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& manifest, std::string_view split);

/// One item per caption.
std::vector<TrainItem> load_train_items(const std::filesystem::path& features_dir,
                                        const std::vector<ManifestEntry>& entries, const Vocabulary& vocab);
std::vector<EvalVideo> load_eval_videos(const std::filesystem::path& features_dir,
                                        const std::vector<ManifestEntry>& entries);

/// Item order for one epoch: a permutation of 0..count−1 drawn from the
/// generator seeded with derive_seed(seed, epoch), split into batches.
std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch);

/// Captions padded with PAD to the batch's longest caption. mask[i][t] is 1
/// for real tokens.
struct PaddedBatch {
  std::vector<std::string> video_ids;
  std::vector<const Tensor*> frames;
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<std::vector<std::uint8_t>> mask;

  std::size_t size() const { return tokens.size(); }
  /// Number of real tokens in row i.
  std::size_t length(std::size_t i) const;
};

PaddedBatch make_batch(const std::vector<TrainItem>& items, const std::vector<std::size_t>& indices);

}  // namespace hmd
