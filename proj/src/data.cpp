#include "hmd/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "hmd/hashing.hpp"
#include "hmd/tokens.hpp"

namespace hmd {

namespace {

constexpr std::array<char, 4> kFeatureMagic = {'V', 'F', 'F', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw feature_format_error(FeatureError::truncated, origin_ + ": truncated payload while reading " + what);
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw feature_format_error(FeatureError::io, "cannot open feature file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Tensor FeatureFile::to_tensor() const {
  std::vector<double> v(values.begin(), values.end());
  return Tensor(Shape{m, q}, std::move(v));
}

std::size_t feature_file_size(std::size_t id_length, std::size_t m, std::size_t q) {
  return 4 + 4 + 4 + id_length + 4 + 4 + 4 * m * q;
}

void write_feature_file(const FeatureFile& file, const std::filesystem::path& path) {
  if (file.video_id.empty()) throw std::invalid_argument("write_feature_file: empty video id");
  if (file.m == 0 || file.q == 0) throw std::invalid_argument("write_feature_file: m and q must be positive");
  if (file.values.size() != file.m * file.q) {
    throw std::invalid_argument("write_feature_file: " + std::to_string(file.values.size()) +
                                " values for header " + std::to_string(file.m) + "x" + std::to_string(file.q));
  }
  std::string out(kFeatureMagic.begin(), kFeatureMagic.end());
  put_u32(out, kFeatureFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(file.video_id.size()));
  out += file.video_id;
  put_u32(out, static_cast<std::uint32_t>(file.m));
  put_u32(out, static_cast<std::uint32_t>(file.q));
  for (float f : file.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write feature file " + path.string());
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const std::string origin = path.string();
  Reader r(bytes, origin);
  if (bytes.size() < 4 || !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin())) {
    throw feature_format_error(FeatureError::bad_magic, origin + ": bad magic (expected VFF1)");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kFeatureFormatVersion) {
    throw feature_format_error(FeatureError::bad_version, origin + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t id_len = r.u32("id length");
  if (id_len == 0) throw feature_format_error(FeatureError::invalid_header, origin + ": empty video id");
  FeatureFile f;
  f.video_id.assign(r.take(id_len, "video id"), id_len);
  f.m = r.u32("m");
  f.q = r.u32("q");
  if (f.m == 0 || f.q == 0) {
    throw feature_format_error(FeatureError::invalid_header, origin + ": m and q must be positive");
  }
  const std::uint64_t elements = std::uint64_t{f.m} * std::uint64_t{f.q};
  if (elements > kMaxFeatureElements) {
    throw feature_format_error(FeatureError::overflow, origin + ": m*q = " + std::to_string(elements) +
                                                           " exceeds the element cap");
  }
  if (r.remaining() != elements * 4) {
    if (r.remaining() < elements * 4) {
      throw feature_format_error(FeatureError::truncated, origin + ": truncated payload (" +
                                                              std::to_string(r.remaining()) + " of " +
                                                              std::to_string(elements * 4) + " bytes)");
    }
    throw feature_format_error(FeatureError::invalid_header, origin + ": trailing bytes after payload");
  }
  f.values.resize(elements);
  for (auto& v : f.values) v = std::bit_cast<float>(r.u32("payload"));
  return f;
}

std::filesystem::path feature_path(const std::filesystem::path& dir, std::string_view video_id) {
  return dir / (std::string(video_id) + ".vff");
}

// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.video_id = j.at("video_id").get<std::string>();
      e.split = j.at("split").get<std::string>();
      e.captions = j.at("captions").get<std::vector<std::string>>();
      if (e.split != "train" && e.split != "val" && e.split != "test") {
        throw std::runtime_error("split must be train, val or test");
      }
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad manifest record: " + ex.what());
    }
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["video_id"] = e.video_id;
    j["split"] = e.split;
    j["captions"] = e.captions;
    out << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::ispunct(c)) continue;
    if (c < 128 && std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    current.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& t : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t, 0);
}

std::size_t Vocabulary::index_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

void Vocabulary::add(const std::string& token, std::size_t count) {
  if (token.empty()) throw std::invalid_argument("vocabulary: empty token");
  if (!index_.emplace(token, tokens_.size()).second) {
    throw std::invalid_argument("vocabulary: duplicate token '" + token + "'");
  }
  tokens_.push_back(token);
  counts_.push_back(count);
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, std::size_t min_count) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (auto& t : tokenize(line)) {
      if (counts[t]++ == 0) order.push_back(t);
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return counts[a] > counts[b]; });
  Vocabulary v;
  for (const auto& t : order) {
    if (counts[t] >= min_count) v.add(t, counts[t]);
  }
  return v;
}

void write_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.token(i) << '\t' << vocab.count(i) << '\n';
}

Vocabulary read_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  const Vocabulary reserved;
  Vocabulary v;
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error(path.string() + ": expected token<TAB>count");
    const std::string token = line.substr(0, tab);
    const std::size_t count = std::stoull(line.substr(tab + 1));
    if (i < kNumReserved) {
      if (token != reserved.token(i)) {
        throw std::runtime_error(path.string() + ": reserved token " + reserved.token(i) + " missing at line " +
                                 std::to_string(i + 1));
      }
    } else {
      v.add(token, count);
    }
    ++i;
  }
  if (i < kNumReserved) throw std::runtime_error(path.string() + ": vocabulary lacks reserved tokens");
  return v;
}

CaptionSequence encode_caption(std::string_view text, const Vocabulary& vocab, std::string video_id) {
  CaptionSequence c;
  c.video_id = std::move(video_id);
  c.tokens.push_back(kBos);
  for (const auto& t : tokenize(text)) c.tokens.push_back(vocab.index_of(t));
  c.tokens.push_back(kEos);
  c.text = normalize_text(text);
  return c;
}

std::string decode_tokens(const std::vector<std::size_t>& indices, const Vocabulary& vocab) {
  std::string out;
  for (auto i : indices) {
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(i);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& manifest, std::string_view split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : manifest) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

namespace {

Tensor load_frames(const std::filesystem::path& dir, const std::string& id) {
  const FeatureFile f = read_feature_file(feature_path(dir, id));
  if (f.video_id != id) {
    throw std::runtime_error("feature file for " + id + " declares video id " + f.video_id);
  }
  return f.to_tensor();
}

}  // namespace

std::vector<TrainItem> load_train_items(const std::filesystem::path& features_dir,
                                        const std::vector<ManifestEntry>& entries, const Vocabulary& vocab) {
  std::vector<TrainItem> out;
  for (const auto& e : entries) {
    const Tensor frames = load_frames(features_dir, e.video_id);
    for (const auto& c : e.captions) {
      auto seq = encode_caption(c, vocab, e.video_id);
      if (seq.tokens.size() < 3) continue;
      out.push_back({e.video_id, frames, std::move(seq.tokens)});
    }
  }
  return out;
}

std::vector<EvalVideo> load_eval_videos(const std::filesystem::path& features_dir,
                                        const std::vector<ManifestEntry>& entries) {
  std::vector<EvalVideo> out;
  for (const auto& e : entries) {
    EvalVideo v{e.video_id, load_frames(features_dir, e.video_id), {}};
    for (const auto& c : e.captions) v.references.push_back(normalize_text(c));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_order(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                  std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, epoch));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return out;
}

std::size_t PaddedBatch::length(std::size_t i) const {
  return static_cast<std::size_t>(std::count(mask.at(i).begin(), mask.at(i).end(), std::uint8_t{1}));
}

PaddedBatch make_batch(const std::vector<TrainItem>& items, const std::vector<std::size_t>& indices) {
  PaddedBatch b;
  std::size_t longest = 0;
  for (auto i : indices) longest = std::max(longest, items.at(i).tokens.size());
  for (auto i : indices) {
    const auto& it = items[i];
    b.video_ids.push_back(it.video_id);
    b.frames.push_back(&it.frames);
    std::vector<std::size_t> row(longest, kPad);
    std::vector<std::uint8_t> mask(longest, 0);
    std::copy(it.tokens.begin(), it.tokens.end(), row.begin());
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(it.tokens.size()), 1);
    b.tokens.push_back(std::move(row));
    b.mask.push_back(std::move(mask));
  }
  return b;
}

}  // namespace hmd
